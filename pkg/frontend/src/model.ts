/**
 * View-model types shared across the workbench, mirroring the review
 * service's JSON wire shapes, plus the agreement-band rule used for badges
 * and chart thresholds.
 */

export type Band = 'excellent' | 'substantial' | 'low';

export const EXCELLENT_THRESHOLD = 0.75;
export const SUBSTANTIAL_THRESHOLD = 0.6;

/** Thresholds are inclusive at their lower bound. */
export function bandFor(kappa: number): Band {
  if (kappa >= EXCELLENT_THRESHOLD) return 'excellent';
  if (kappa >= SUBSTANTIAL_THRESHOLD) return 'substantial';
  return 'low';
}

// --- service wire shapes ----------------------------------------------------

export interface ApiErrorBody {
  status: number;
  code: string;
  message: string;
}

export interface CodebookCode {
  id: string;
  title: string;
  definition: string;
  category?: string;
  notes?: string;
}

export interface CodebookDoc {
  name: string;
  preamble: string;
  codes: CodebookCode[];
  version: string;
}

export interface ApiDisagreement {
  passage_id: string;
  code_id: string;
  gold: boolean;
  machine: boolean;
  justification: string | null;
  excerpt: string;
  run_id: string;
}

export interface ReportRow {
  code_id: string;
  a: number;
  b: number;
  c: number;
  d: number;
  n: number;
  excluded: number;
  kappa: number | null;
  percent_agreement: number | null;
  ac1: number | null;
  band: Band | null;
}

export interface Report {
  run_id: string;
  codebook_version: string;
  mean_kappa: { mean: number | null; excluded: number };
  per_code: ReportRow[];
}

export interface RunDecision {
  passage_id: string;
  scope_code: string | null;
  justification: string | null;
  applied: string[];
  unknown_titles: string[];
  parse_status: 'clean' | 'recovered' | 'unparseable';
}

export interface RunDoc {
  run_id: string;
  codebook_version: string;
  config: {
    model: string;
    scope: 'per-code' | 'full-codebook';
    reasoning: 'cot' | 'direct';
    temperature: number;
    top_p: number;
  };
  decisions: RunDecision[];
  meta: {
    codebook_id: string | null;
    code_ids: string[];
    passages: { id: string; text: string }[];
    parent_run_id: string | null;
    cells: [string, string][] | null;
    incomplete: boolean;
    unparseable_count: number;
  };
}

export interface RawTrendPoint {
  codebook_version: string;
  run_id: string;
  kappa: number | null;
}

// --- workbench view state ----------------------------------------------------

export interface DisagreementRow {
  passageId: string;
  codeId: string;
  codeTitle: string;
  gold: boolean;
  machine: boolean;
  justification: string | null;
  excerpt: string;
  runId: string;
}

export interface TrendPoint {
  codebookVersion: string;
  runId: string;
  kappa: number | null;
  band: Band | null;
}

/** A retested cell whose machine decision moved from `before` to `after`. */
export interface CellChange {
  passageId: string;
  codeId: string;
  before: boolean | null;
  after: boolean | null;
}

export interface CodeBadge {
  kappa: number | null;
  band: Band | null;
  fromRunId: string;
}

export function shortVersion(version: string): string {
  return version.slice(0, 12);
}
