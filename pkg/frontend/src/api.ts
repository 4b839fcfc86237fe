/**
 * Typed client for the review service. Every workbench mutation and view
 * maps 1:1 onto one of these documented endpoints; the UI performs no other
 * writes and keeps no state the service cannot reproduce.
 */

import type {
  ApiDisagreement,
  ApiErrorBody,
  CodebookDoc,
  RawTrendPoint,
  Report,
  RunDoc,
} from './model.js';

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(body: ApiErrorBody) {
    super(body.message);
    this.status = body.status;
    this.code = body.code;
  }
}

export interface ProviderSpec {
  kind: 'scripted' | 'http';
  script?: Record<string, string>;
  base_url?: string;
  api_key_env?: string;
}

export interface RunRequest {
  codebook_id: string;
  codebook_version?: string | null;
  scope?: 'per-code' | 'full-codebook';
  reasoning?: 'cot' | 'direct';
  model: string;
  temperature?: number;
  top_p?: number;
  provider: ProviderSpec;
  passage_ids?: string[] | null;
}

export interface RetestRequest {
  passage_ids: string[];
  code_ids: string[];
  codebook_version: string;
  provider?: ProviderSpec;
}

export interface CodeEdit {
  title?: string;
  definition?: string;
  category?: string;
  notes?: string;
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = (await response.json()) as ApiErrorBody;
    if (body && typeof body.status === 'number' && body.code) return new ApiError(body);
  } catch {
    // fall through to the generic error below
  }
  return new ApiError({
    status: response.status,
    code: 'http_error',
    message: `request failed with status ${response.status}`,
  });
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { 'content-type': 'application/json' },
      ...init,
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  codebookVersions(codebookId: string): Promise<string[]> {
    return this.request(`/codebooks/${codebookId}/versions`);
  }

  codebook(codebookId: string, version: string): Promise<CodebookDoc> {
    return this.request(`/codebooks/${codebookId}/${version}`);
  }

  updateCode(
    codebookId: string,
    codeId: string,
    edit: CodeEdit,
  ): Promise<{ old_version: string; new_version: string }> {
    return this.request(`/codebooks/${codebookId}/codes/${codeId}`, {
      method: 'PUT',
      body: JSON.stringify(edit),
    });
  }

  createRun(body: RunRequest): Promise<{ run_id: string }> {
    return this.request('/runs', { method: 'POST', body: JSON.stringify(body) });
  }

  run(runId: string): Promise<RunDoc> {
    return this.request(`/runs/${runId}`);
  }

  report(runId: string): Promise<Report> {
    return this.request(`/runs/${runId}/report`);
  }

  disagreements(runId: string): Promise<ApiDisagreement[]> {
    return this.request(`/runs/${runId}/disagreements`);
  }

  retest(runId: string, body: RetestRequest): Promise<{ derived_run_id: string }> {
    return this.request(`/runs/${runId}/retest`, {
      method: 'POST',
      body: JSON.stringify(body),
    });
  }

  kappaTrend(codeId: string): Promise<RawTrendPoint[]> {
    return this.request(`/codes/${codeId}/kappa-trend`);
  }
}
