import { ApplyParams, ComposeParams, DirectionDoc, ExtractResponse } from "./types.js";

export const ZERO_NORM = 1e-9;

/** A stored transformation with its UI state. */
export interface DirectionCard {
  directionId: string;
  label: string;
  doc: DirectionDoc;
  norm: number;
  zeroDirection: boolean;
  thumbA: string | null;
  thumbB: string | null;
  layersOn: boolean[];
  lastGamma: number;
}

export interface StackEntry {
  card: DirectionCard;
  weight: number;
}

export function cardFromExtract(
  res: ExtractResponse,
  label: string,
  thumbA: string | null = null,
  thumbB: string | null = null,
): DirectionCard {
  return {
    directionId: res.direction_id,
    label,
    doc: res.direction,
    norm: res.norm,
    zeroDirection: res.norm <= ZERO_NORM,
    thumbA,
    thumbB,
    layersOn: new Array(res.direction.K).fill(true),
    lastGamma: 1.0,
  };
}

/** Indices of enabled layers, or null when no restriction is needed. */
export function restrictedLayers(card: DirectionCard): number[] | null {
  if (card.layersOn.every(Boolean)) return null;
  const on = card.layersOn.flatMap((v, i) => (v ? [i] : []));
  return on;
}

export function singleApplyParams(card: DirectionCard, seed: number, gamma: number): ApplyParams {
  const params: ApplyParams = { seed, gammas: [gamma], direction_id: card.directionId };
  const layers = restrictedLayers(card);
  if (layers != null) params.layers = layers;
  return params;
}

export function stackComposeParams(
  stack: StackEntry[],
  seed?: number,
  gammas?: number[],
): ComposeParams {
  const params: ComposeParams = {
    direction_ids: stack.map(e => e.card.directionId),
    weights: stack.map(e => e.weight),
  };
  if (seed !== undefined) params.seed = seed;
  if (gammas !== undefined) params.gammas = gammas;
  return params;
}

/** The /recipe request describing the current canvas: inline direction
 * documents so the recipe stays valid even if the server registry is gone. */
export function stackRecipeParams(stack: StackEntry[], seed: number, gamma: number): ApplyParams {
  return {
    seed,
    gammas: [gamma],
    directions: stack.map(e => e.card.doc),
    weights: stack.map(e => e.weight),
  };
}

export class CardStore {
  private cards = new Map<string, DirectionCard>();
  private counter = 0;

  nextLabel(): string {
    this.counter += 1;
    return `direction ${this.counter}`;
  }

  add(card: DirectionCard): DirectionCard {
    this.cards.set(card.directionId, card);
    return card;
  }

  get(directionId: string): DirectionCard | undefined {
    return this.cards.get(directionId);
  }

  remove(directionId: string): void {
    this.cards.delete(directionId);
  }

  list(): DirectionCard[] {
    return [...this.cards.values()];
  }
}
