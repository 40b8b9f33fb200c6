/** Clinician audit view: posterior trajectories, entropy sparkline, trace table.
 *
 * Chart points carry the trace values verbatim in data attributes; nothing is
 * recomputed client-side, so the rendered numbers always equal the trace
 * endpoint's after JSON parsing.
 */

import type { ClinicianTrace, TurnRecordWire } from "./types.js";

const CHART_W = 640;
const CHART_H = 240;
const SPARK_H = 60;
const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl(doc: Document, tag: string): SVGElement {
  return doc.createElementNS(SVG_NS, tag) as SVGElement;
}

function xFor(turn: number, maxTurn: number): number {
  return maxTurn <= 1 ? 0 : ((turn - 1) / (maxTurn - 1)) * CHART_W;
}

/** Per-disease posterior series across turns, from the recorded top-5 snapshots. */
export function posteriorSeries(records: TurnRecordWire[]): Map<string, (number | null)[]> {
  const diseases: string[] = [];
  for (const rec of records) {
    for (const [d] of rec.posterior_top5) {
      if (!diseases.includes(d)) diseases.push(d);
    }
  }
  const series = new Map<string, (number | null)[]>();
  for (const d of diseases) {
    series.set(
      d,
      records.map((rec) => {
        const hit = rec.posterior_top5.find(([id]) => id === d);
        return hit ? hit[1] : null;
      }),
    );
  }
  return series;
}

export function renderAuditView(container: HTMLElement, trace: ClinicianTrace): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  container.dataset.tau = String(trace.tau);

  const records = trace.records;
  const maxTurn = records.length === 0 ? 1 : records[records.length - 1].turn;

  // posterior trajectory chart with the decision threshold line
  const chart = svgEl(doc, "svg");
  chart.setAttribute("class", "posterior-chart");
  chart.setAttribute("viewBox", `0 0 ${CHART_W} ${CHART_H}`);
  const tauLine = svgEl(doc, "line");
  tauLine.setAttribute("class", "tau-line");
  tauLine.setAttribute("x1", "0");
  tauLine.setAttribute("x2", String(CHART_W));
  tauLine.setAttribute("y1", String(CHART_H * (1 - trace.tau)));
  tauLine.setAttribute("y2", String(CHART_H * (1 - trace.tau)));
  tauLine.setAttribute("data-tau", String(trace.tau));
  chart.append(tauLine);

  for (const [disease, values] of posteriorSeries(records)) {
    const group = svgEl(doc, "g");
    group.setAttribute("class", "series");
    group.setAttribute("data-disease", disease);
    const points: string[] = [];
    values.forEach((v, i) => {
      if (v === null) return;
      const x = xFor(records[i].turn, maxTurn);
      const y = CHART_H * (1 - v);
      points.push(`${x},${y}`);
      const dot = svgEl(doc, "circle");
      dot.setAttribute("class", "point");
      dot.setAttribute("cx", String(x));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "2");
      dot.setAttribute("data-disease", disease);
      dot.setAttribute("data-turn", String(records[i].turn));
      dot.setAttribute("data-value", String(v));
      group.append(dot);
    });
    if (points.length > 1) {
      const line = svgEl(doc, "polyline");
      line.setAttribute("points", points.join(" "));
      line.setAttribute("fill", "none");
      group.append(line);
    }
    chart.append(group);
  }
  container.append(chart);

  // entropy sparkline
  const spark = svgEl(doc, "svg");
  spark.setAttribute("class", "entropy-sparkline");
  spark.setAttribute("viewBox", `0 0 ${CHART_W} ${SPARK_H}`);
  const maxEntropy = Math.max(1e-9, ...records.map((r) => r.entropy_bits));
  records.forEach((rec) => {
    const dot = svgEl(doc, "circle");
    dot.setAttribute("class", "entropy-point");
    dot.setAttribute("cx", String(xFor(rec.turn, maxTurn)));
    dot.setAttribute("cy", String(SPARK_H * (1 - rec.entropy_bits / maxEntropy)));
    dot.setAttribute("r", "2");
    dot.setAttribute("data-turn", String(rec.turn));
    dot.setAttribute("data-value", String(rec.entropy_bits));
    spark.append(dot);
  });
  container.append(spark);

  // trace table
  const table = doc.createElement("table");
  table.className = "trace-table";
  const head = doc.createElement("tr");
  for (const caption of ["turn", "feature", "value", "confidence", "tier", "gain"]) {
    const th = doc.createElement("th");
    th.textContent = caption;
    head.append(th);
  }
  table.append(head);
  for (const rec of records) {
    const row = doc.createElement("tr");
    row.dataset.turn = String(rec.turn);
    row.dataset.updateApplied = String(rec.update_applied);
    const cells = [
      String(rec.turn),
      rec.asked_feature,
      rec.parsed.value === null ? "" : String(rec.parsed.value),
      rec.parsed.confidence === null ? "" : String(rec.parsed.confidence),
      rec.parsed.tier ?? "",
      String(rec.eig_value),
    ];
    cells.forEach((text, i) => {
      const td = doc.createElement("td");
      td.textContent = text;
      if (i === 5) td.dataset.value = String(rec.eig_value);
      row.append(td);
    });
    if (rec.reask_count > 0) {
      const badge = doc.createElement("span");
      badge.className = "reask-badge";
      badge.textContent = "re-asked";
      row.cells[1].append(badge);
    }
    table.append(row);
  }
  container.append(table);
}
