// Wire types for the morphspace HTTP API. Field names are the JSON keys.

export interface HealthInfo {
  status: string;
  version: string;
  model_hash: string;
  resolution: number;
  stage: number;
  k_layers: number;
  t_dim: number;
  z_dim: number;
  rerenderer: boolean;
}

export interface DirectionDoc {
  format_version: number;
  K: number;
  t_dim: number;
  layer_mask: number[];
  delta: number[][];
}

export interface GenerateResponse {
  image: string;
  code: number[][];
  seed: number;
  resolution: number;
}

export interface ExtractResponse {
  direction_id: string;
  direction: DirectionDoc;
  norm: number;
  t_source: number[][];
  t_target: number[][];
}

export interface DirectionSummary {
  direction_id: string;
  norm: number;
  layer_mask: number[];
  k_layers: number;
  t_dim: number;
}

export interface ApplyParams {
  seed: number;
  gammas: number[];
  direction_id?: string;
  direction?: DirectionDoc;
  directions?: DirectionDoc[];
  weights?: number[];
  layers?: number[];
}

export interface ApplyResponse {
  images: string[];
  gammas: number[];
  seed: number;
}

export interface ComposeParams {
  direction_ids?: string[];
  directions?: DirectionDoc[];
  weights: number[];
  seed?: number;
  gammas?: number[];
}

export interface ComposeResponse {
  direction_id: string;
  direction: DirectionDoc;
  norm: number;
  images?: string[];
  gammas?: number[];
}

export interface Recipe {
  format_version: number;
  kind: string;
  model_hash: string;
  seed: number;
  gammas: number[];
  weights: number[];
  directions: DirectionDoc[];
  layers?: number[];
}

export interface ReplayResponse {
  images: string[];
  gammas: number[];
}

export interface ApiFieldError {
  field: string;
  message: string;
}
