/** Wire types for the session service HTTP contract. */

export type SessionState = "awaiting_answer" | "committed" | "abstained";

export interface CurrentQuestion {
  text: string;
  kind: "free_text" | "binary" | "categorical" | "ordinal" | "numeric";
  values: string[];
  numeric_scale?: [number, number, number] | null;
  reask: boolean;
}

export interface Outcome {
  state: "committed" | "abstained";
  stop_reason: string;
  diagnosis?: string;
  confidence_band?: "low" | "medium" | "high";
  message?: string;
}

export interface SessionHandle {
  session_id: string;
  state: SessionState;
  turn: number;
  nonce: number;
  current_question: CurrentQuestion | null;
  outcome?: Outcome;
}

export interface ParsedAnswer {
  value: string | number | null;
  confidence: number | null;
  tier: string | null;
}

export interface TurnRecordWire {
  turn: number;
  asked_feature: string;
  eig_value: number;
  question_text: string;
  raw_answer: string;
  parsed: ParsedAnswer;
  update_applied: boolean;
  posterior_top5: [string, number][];
  entropy_bits: number;
  max_posterior: number;
  reask_count: number;
}

export interface ClinicianTrace {
  header: Record<string, unknown>;
  records: TurnRecordWire[];
  state: string;
  stop_reason: string | null;
  tau: number;
  final_ranking: [string, number][];
}

export interface PatientTraceRecord {
  turn: number;
  question_text: string;
  raw_answer: string;
  reask_count: number;
}

export interface PatientTrace {
  records: PatientTraceRecord[];
  state: string;
}

export interface PolicyConfigWire {
  mode: "global" | "focused";
  k?: number;
  lambda?: number;
  theta?: number;
}

export interface SessionConfigWire {
  tau: number;
  t_min?: number;
  t_max?: number;
  policy?: PolicyConfigWire;
}

export interface CreateSessionRequest {
  kb_id: string;
  config: SessionConfigWire;
  mode: "human_patient";
}

export type AnswerRequest =
  | { text: string; nonce: number }
  | { structured: { value: string | number; confidence_label: string }; nonce: number };
