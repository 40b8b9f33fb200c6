"""Unified command-line entry point: KB tooling, patient generation, runs, evaluation, service."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from .evaluation import (
    DEFAULT_GAMMA,
    RunResult,
    RunSet,
    classify_failures,
    cross_kb_eval,
    metrics_row,
    rows_to_csv,
    scaling_experiment,
    stratify_prevalence,
    sweep_threshold,
)
from .kb import (
    BuildOptions,
    PriorStrategy,
    build_from_records,
    import_elicited,
    kb_stats,
    load_kb,
    match_features,
)
from .patients import PERSONAS, PatientProfile, derive_seed, generate_cohort, stratified_subset
from .policy import PolicyConfig, eig_scores
from .sensor import make_sensor
from .session import (
    EvidenceTriple,
    OracleResponder,
    PersonaResponder,
    Session,
    SessionConfig,
    SessionResult,
    read_trace,
    trace_lines,
    update_belief,
)

logger = logging.getLogger(__name__)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Diagnostic-dialogue workbench."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


# -- kb -----------------------------------------------------------------------


@main.group()
def kb() -> None:
    """Build, import, and analyze knowledge bases."""


@kb.command("build")
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="JSONL: one {disease_id, findings:{...}} object per line.")
@click.option("--top-m", default=20, show_default=True, help="Multi-choice expansion cutoff.")
@click.option("--out", "out_path", required=True, type=click.Path())
def kb_build(schema_path: str, records_path: str, top_m: int, out_path: str) -> None:
    """Accumulate counts from labelled records into a KB file."""
    schema = json.loads(Path(schema_path).read_text())
    records = []
    for line in Path(records_path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append((obj["disease_id"], obj.get("findings", {})))
    built = build_from_records(records, schema, BuildOptions(top_m=top_m))
    built.save(out_path)
    click.echo(f"wrote KB with K={built.n_diseases}, N={built.n_features} to {out_path}")


@kb.command("import-elicited")
@click.option("--tables", "tables_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def kb_import(tables_path: str, out_path: str) -> None:
    """Convert elicited probability tables into a KB file (invalid entries excluded)."""
    built = import_elicited(tables_path)
    built.save(out_path)
    click.echo(f"wrote KB with K={built.n_diseases}, N={built.n_features} to {out_path}")


@kb.command("stats")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def kb_stats_cmd(kb_path: str, fmt: str, out_path: str | None) -> None:
    """Informativeness report: per-pair KL from uniform plus binary variance/range."""
    stats = kb_stats(load_kb(kb_path))
    if fmt == "json":
        text = json.dumps(stats.to_dict(), indent=2, sort_keys=True)
    else:
        lines = ["disease_id,feature_id,kl_bits"]
        lines += [f"{d},{f},{v:.6f}" for (d, f), v in sorted(stats.per_pair_kl.items())]
        text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@kb.command("match")
@click.option("--kb-a", required=True, type=click.Path(exists=True))
@click.option("--kb-b", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def kb_match(kb_a: str, kb_b: str, out_path: str | None) -> None:
    """Match features across two KBs by canonical name and kind."""
    m = match_features(load_kb(kb_a), load_kb(kb_b))
    text = json.dumps(m.to_dict(), indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


# -- patients ---------------------------------------------------------------------


@main.group()
def patients() -> None:
    """Generate and subsample synthetic patients."""


@patients.command("sample")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--per-disease", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def patients_sample(kb_path: str, per_disease: int, seed: int, out_path: str | None) -> None:
    """Ancestral-sample a cohort (per-disease count, derived seeds)."""
    cohort = generate_cohort(load_kb(kb_path), per_disease, seed)
    lines = "\n".join(json.dumps(p.to_dict(), sort_keys=True) for p in cohort) + "\n"
    if out_path:
        Path(out_path).write_text(lines)
        click.echo(f"wrote {len(cohort)} profiles to {out_path}")
    else:
        click.echo(lines, nl=False)


@patients.command("stratify")
@click.option("--profiles", "profiles_path", required=True, type=click.Path(exists=True))
@click.option("--n", "n", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def patients_stratify(profiles_path: str, n: int, seed: int, out_path: str | None) -> None:
    """Pick n profiles keeping at least one per disease."""
    profiles = _load_profiles(profiles_path)
    subset = stratified_subset(profiles, n, seed)
    lines = "\n".join(json.dumps(p.to_dict(), sort_keys=True) for p in subset) + "\n"
    if out_path:
        Path(out_path).write_text(lines)
        click.echo(f"wrote {len(subset)} profiles to {out_path}")
    else:
        click.echo(lines, nl=False)


def _load_profiles(path: str | Path) -> list[PatientProfile]:
    return [
        PatientProfile.from_dict(json.loads(line))
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


# -- run -------------------------------------------------------------------------


def _session_config(tau, tmin, tmax, policy, prior, sigma, seed) -> SessionConfig:
    return SessionConfig(
        tau=tau,
        t_min=tmin,
        t_max=tmax,
        policy=PolicyConfig(policy),
        prior_strategy=PriorStrategy(prior),
        numeric_sigma=sigma,
        seed=seed,
    )


def _responder_factory(sensor_mode: str, persona_name: str, seed: int):
    persona = PERSONAS[persona_name]

    def factory(profile: PatientProfile):
        if sensor_mode == "oracle":
            return OracleResponder(profile)
        return PersonaResponder(profile, persona, derive_seed(seed, "responder", profile.id))

    return factory


@main.command("run")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--patients", "patients_path", required=True, type=click.Path(exists=True))
@click.option("--sensor", "sensor_mode", type=click.Choice(["oracle", "patterns", "external"]),
              default="oracle", show_default=True)
@click.option("--persona", type=click.Choice(sorted(PERSONAS)), default="plain", show_default=True)
@click.option("--tau", default=0.9, show_default=True)
@click.option("--tmin", default=12, show_default=True)
@click.option("--tmax", default=20, show_default=True)
@click.option("--policy", type=click.Choice(["global", "focused"]), default="global",
              show_default=True)
@click.option("--prior", type=click.Choice(["empirical", "uniform"]), default="empirical",
              show_default=True)
@click.option("--sigma", default=1.0, show_default=True, help="Numeric soft-match width.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def run_cmd(kb_path, patients_path, sensor_mode, persona, tau, tmin, tmax, policy,
            prior, sigma, seed, out_dir) -> None:
    """Run one session per profile; write traces, results, and a metrics row."""
    knowledge = load_kb(kb_path)
    profiles = _load_profiles(patients_path)
    cfg = _session_config(tau, tmin, tmax, policy, prior, sigma, seed)
    sensor = make_sensor("patterns" if sensor_mode == "oracle" else sensor_mode)
    factory = _responder_factory(sensor_mode, persona, seed)
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)

    results = []
    for profile in profiles:
        session = Session(knowledge, sensor, cfg, profile_id=profile.id)
        responder = factory(profile)
        try:
            session.submit_intake(responder.intake())
            while session.state == "asking":
                feature, _ = session.current_question()
                session.submit_answer(responder.answer(feature, reask=session.pending_reask()))
            res = session.result()
        except Exception:
            logger.exception("session for %s aborted", profile.id)
            res = session.result(incomplete=True)
        (out / "traces" / f"{session.session_id}.jsonl").write_text(
            "\n".join(trace_lines(res, session.header())) + "\n"
        )
        results.append(RunResult(profile.id, profile.disease_id, res))

    rs = RunSet(results, kb_ref=knowledge.kb_hash, config_ref=cfg.to_dict())
    _write_results(out, rs)
    (out / "metrics.csv").write_text(rows_to_csv([metrics_row(rs)]))
    click.echo(f"ran {len(results)} sessions into {out_dir}")


def _write_results(out: Path, rs: RunSet) -> None:
    lines = [
        json.dumps(
            {"profile_id": rr.profile_id, "truth": rr.truth, "result": rr.result.to_dict()},
            sort_keys=True,
        )
        for rr in rs.results
    ]
    payload = {"kb_ref": rs.kb_ref, "config_ref": rs.config_ref, "n": len(rs.results)}
    (out / "results.jsonl").write_text("\n".join(lines) + "\n")
    (out / "runset.json").write_text(json.dumps(payload, sort_keys=True, indent=2))


def _load_runset(results_dir: str | Path) -> RunSet:
    out = Path(results_dir)
    meta = json.loads((out / "runset.json").read_text())
    results = []
    for line in (out / "results.jsonl").read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        results.append(
            RunResult(obj["profile_id"], obj["truth"], SessionResult.from_dict(obj["result"]))
        )
    return RunSet(results, kb_ref=meta.get("kb_ref", ""), config_ref=meta.get("config_ref"))


# -- bench ------------------------------------------------------------------------


@main.command("bench")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--per-disease", default=5, show_default=True)
@click.option("--sensor", "sensor_mode", type=click.Choice(["oracle", "patterns"]),
              default="patterns", show_default=True)
@click.option("--persona", type=click.Choice(sorted(PERSONAS)), default="plain", show_default=True)
@click.option("--tau", default=0.9, show_default=True)
@click.option("--tmin", default=12, show_default=True)
@click.option("--tmax", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def bench(ctx, kb_path, per_disease, sensor_mode, persona, tau, tmin, tmax, seed, out_dir) -> None:
    """Full benchmark: sample a cohort, run every session, sweep thresholds.

    Output is canonical (no timestamps): identical seeds give byte-identical
    traces and CSVs.
    """
    knowledge = load_kb(kb_path)
    cohort = generate_cohort(knowledge, per_disease, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profiles_path = out / "profiles.jsonl"
    profiles_path.write_text(
        "\n".join(json.dumps(p.to_dict(), sort_keys=True) for p in cohort) + "\n"
    )
    ctx.invoke(
        run_cmd,
        kb_path=kb_path,
        patients_path=str(profiles_path),
        sensor_mode=sensor_mode,
        persona=persona,
        tau=tau,
        tmin=tmin,
        tmax=tmax,
        policy="global",
        prior="empirical",
        sigma=1.0,
        seed=seed,
        out_dir=out_dir,
    )
    rs = _load_runset(out)
    rows, tau_star = sweep_threshold(rs)
    (out / "sweep.csv").write_text(rows_to_csv(rows))
    (out / "sweep_summary.json").write_text(
        json.dumps({"tau_star": tau_star}, sort_keys=True) + "\n"
    )
    manifest = {
        "kb": {"path": str(kb_path), "hash": knowledge.kb_hash},
        "cohort": {"profiles": "profiles.jsonl", "per_disease": per_disease,
                   "n": len(cohort), "persona": persona, "sensor": sensor_mode},
        "config": rs.config_ref,
        "seeds": {"cohort": seed, "sessions": seed},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    click.echo(f"benchmark complete; tau_star={tau_star:g}")


# -- eval -------------------------------------------------------------------------


@main.group(name="eval")
def eval_group() -> None:
    """Metrics, sweeps, strata, failure tags, and experiments over saved runs."""


@eval_group.command("metrics")
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option("--tau", type=float, default=None, help="Optional post-hoc commit threshold.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_metrics(results_dir: str, tau: float | None, out_path: str | None) -> None:
    rs = _load_runset(results_dir)
    csv = rows_to_csv([metrics_row(rs, tau)])
    if out_path:
        Path(out_path).write_text(csv)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(csv, nl=False)


@eval_group.command("sweep")
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_sweep(results_dir: str, out_path: str | None) -> None:
    rs = _load_runset(results_dir)
    rows, tau_star = sweep_threshold(rs)
    csv = rows_to_csv(rows)
    if out_path:
        Path(out_path).write_text(csv)
    else:
        click.echo(csv, nl=False)
    click.echo(f"tau_star={tau_star:g}")


@eval_group.command("strata")
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
def eval_strata(results_dir: str, kb_path: str) -> None:
    rs = _load_runset(results_dir)
    per_group = stratify_prevalence(rs, load_kb(kb_path))
    click.echo("group,tau,sel_acc,coverage,dhs,top1,top3,n_committed")
    for group, row in per_group.items():
        click.echo(f"{group},{row.csv_line()}")


@eval_group.command("failures")
@click.option("--results", "results_dir", required=True, type=click.Path(exists=True))
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--patients", "patients_path", required=True, type=click.Path(exists=True))
@click.option("--gamma", default=DEFAULT_GAMMA, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_failures(results_dir, kb_path, patients_path, gamma, out_path) -> None:
    rs = _load_runset(results_dir)
    profiles = {p.id: p for p in _load_profiles(patients_path)}
    tags = classify_failures(rs, load_kb(kb_path), profiles, gamma)
    text = json.dumps({k: v.to_dict() for k, v in sorted(tags.items())}, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


@eval_group.command("scaling")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--sizes", required=True, help="Comma-separated subset sizes, e.g. 10,20,30,40.")
@click.option("--seeds", default="1,2,3", show_default=True)
def eval_scaling(kb_path: str, sizes: str, seeds: str) -> None:
    rows = scaling_experiment(
        load_kb(kb_path),
        [int(s) for s in sizes.split(",")],
        [int(s) for s in seeds.split(",")],
    )
    click.echo("size,seed,top1")
    for r in rows:
        click.echo(f"{r['size']},{r['seed']},{r['top1']:.6f}")


@eval_group.command("cross-kb")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True),
              help="Native KB the engine runs on.")
@click.option("--foreign-kb", required=True, type=click.Path(exists=True))
@click.option("--patients", "patients_path", required=True, type=click.Path(exists=True),
              help="Profiles sampled from the foreign KB.")
def eval_cross_kb(kb_path: str, foreign_kb: str, patients_path: str) -> None:
    native = load_kb(kb_path)
    foreign = load_kb(foreign_kb)
    matching = match_features(native, foreign)
    profiles = _load_profiles(patients_path)
    row, coverage, _ = cross_kb_eval(native, profiles, matching)
    click.echo("feature_coverage," + f"{coverage:.6f}")
    click.echo(rows_to_csv([row]), nl=False)


# -- policy debug -------------------------------------------------------------------


@main.group()
def policy() -> None:
    """Question-policy debugging."""


@policy.command("score")
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--session", "trace_path", type=click.Path(exists=True), default=None,
              help="Replay this trace before scoring (default: score at the prior).")
@click.option("--turn", type=int, default=None, help="Replay up to this turn.")
def policy_score(kb_path: str, trace_path: str | None, turn: int | None) -> None:
    """Emit the full EIG table as CSV for the belief at a trace point."""
    knowledge = load_kb(kb_path)
    asked: set[str] = set()
    if trace_path:
        header, records = read_trace(trace_path)
        cfg = SessionConfig.from_dict(header["config"])
        belief = knowledge.prior(cfg.prior_strategy)
        for t in header.get("intake_triples", ()):
            triple = EvidenceTriple.from_dict(t)
            belief = update_belief(belief, knowledge, triple, numeric_sigma=cfg.numeric_sigma)
            asked.add(triple.feature_id)
        for rec in records:
            if turn is not None and rec.turn > turn:
                break
            asked.add(rec.asked_feature)
            if rec.update_applied:
                belief = update_belief(
                    belief, knowledge,
                    EvidenceTriple(rec.asked_feature, rec.parsed_value, rec.parsed_confidence,
                                   tier=rec.parsed_tier),
                    numeric_sigma=cfg.numeric_sigma,
                )
    else:
        belief = knowledge.prior()
    scores = eig_scores(belief, knowledge)
    click.echo("feature_id,eig_bits,asked")
    for fid in sorted(scores):
        click.echo(f"{fid},{scores[fid]:.9f},{int(fid in asked)}")


# -- serve -------------------------------------------------------------------------


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--kb", "kb_paths", multiple=True, type=click.Path(exists=True),
              help="KB files to register at startup (repeatable).")
@click.option("--store", "store_dir", default="./sessions", show_default=True)
@click.option("--runs", "runs_dir", default=None, type=click.Path())
@click.option("--console", "console_dir", default=None, type=click.Path(),
              help="Static console bundle to serve at /console.")
def serve(port, host, kb_paths, store_dir, runs_dir, console_dir) -> None:
    """Start the HTTP service for live sessions and saved artifacts."""
    import uvicorn

    from .service import create_app

    kbs = {}
    for path in kb_paths:
        knowledge = load_kb(path)
        kbs[Path(path).stem] = knowledge
    app = create_app(store_dir=store_dir, kbs=kbs, runs_dir=runs_dir, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
