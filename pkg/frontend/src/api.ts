import {
  ApiFieldError,
  ApplyParams,
  ApplyResponse,
  ComposeParams,
  ComposeResponse,
  DirectionSummary,
  ExtractResponse,
  GenerateResponse,
  HealthInfo,
  Recipe,
  ReplayResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  field: string;

  constructor(status: number, field: string, message: string) {
    super(message);
    this.status = status;
    this.field = field;
  }
}

async function errorFrom(res: Response): Promise<ApiError> {
  let field = "";
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    const first: ApiFieldError | undefined = body?.errors?.[0];
    if (first) {
      field = first.field;
      message = first.message;
    }
  } catch {
    // non-JSON error body, keep the status line
  }
  return new ApiError(res.status, field, message);
}

/** Thin typed client. Every image is a base64 PNG string, exactly as on the wire. */
export class StudioApi {
  private base: string;
  private fetchImpl: FetchLike;

  constructor(base = "", fetchImpl?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const res = await this.fetchImpl(this.base + path, init);
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/health");
  }

  generate(seed: number): Promise<GenerateResponse> {
    return this.request("POST", "/generate", { seed });
  }

  extract(imageA: string, imageB: string): Promise<ExtractResponse> {
    return this.request("POST", "/extract", { image_a: imageA, image_b: imageB });
  }

  directions(): Promise<{ directions: DirectionSummary[] }> {
    return this.request("GET", "/directions");
  }

  apply(params: ApplyParams): Promise<ApplyResponse> {
    return this.request("POST", "/apply", params);
  }

  compose(params: ComposeParams): Promise<ComposeResponse> {
    return this.request("POST", "/compose", params);
  }

  recipe(params: ApplyParams): Promise<{ recipe: Recipe }> {
    return this.request("POST", "/recipe", params);
  }

  replay(recipe: Recipe): Promise<ReplayResponse> {
    return this.request("POST", "/replay", { recipe });
  }
}
