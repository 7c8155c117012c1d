// Wire types mirroring the vulnqa HTTP API JSON. The UI never derives
// metrics itself; everything rendered comes from these payloads.

export interface QueryResult {
  answer: string;
  retrieved_cve_ids: string[];
  backend_id: string;
  input_tokens: number;
  output_tokens: number;
  latency: number;
  failure: string | null;
}

export interface HealthInfo {
  status: string;
  corpus_records: number;
  index_rows: number;
  version: string;
}

export interface FailureCounts {
  hallucination: number;
  omission: number;
  processing_failure: number;
}

export interface TokenEfficiencyBlock {
  cost_units: string;
  total_cost_microusd: number;
  correct_count: number;
  cost_per_correct: number;
  normalized_cost: number;
  raw_efficiency: number;
  accuracy: number;
}

export interface SizeBucket {
  lo: number;
  hi: number;
  n_rows: number;
  n_correct: number;
  accuracy: number | null;
  total_cost_microusd: number;
}

export interface ReportRow {
  batch_id: number;
  cve_id: string;
  question_type: string;
  question: string;
  ground_truth: string;
  response: string;
  judgment: string;
  note: string | null;
  input_tokens: number;
  output_tokens: number;
  latency: number;
}

export interface EvalReport {
  format_version: number;
  backend_id: string;
  seed: number;
  n_batches: number;
  cves_per_batch: number;
  created_at: string;
  rows: ReportRow[];
  overall_accuracy: number;
  overall_error: number;
  per_batch_accuracy: Record<string, number>;
  per_qtype_accuracy: Record<string, number>;
  failure_counts: FailureCounts;
  token_efficiency: TokenEfficiencyBlock | null;
  input_size_buckets: SizeBucket[];
}

export interface RunStarted {
  report_id: string;
}
