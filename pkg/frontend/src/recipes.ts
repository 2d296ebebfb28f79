import { Recipe } from "./types.js";

export const RECIPE_KIND = "edit-recipe";
export const RECIPE_VERSION = 1;

/** Mirrors the server-side recipe checks so a file can be vetted before replay. */
export function validateRecipe(doc: unknown): Recipe {
  if (typeof doc !== "object" || doc == null || Array.isArray(doc)) {
    throw new Error("recipe must be a JSON object");
  }
  const recipe = doc as Record<string, unknown>;
  if (recipe.kind !== RECIPE_KIND) {
    throw new Error(`not an edit recipe (kind=${JSON.stringify(recipe.kind)})`);
  }
  if (recipe.format_version !== RECIPE_VERSION) {
    throw new Error(`unsupported recipe format_version ${JSON.stringify(recipe.format_version)}`);
  }
  for (const key of ["seed", "gammas", "directions"]) {
    if (!(key in recipe)) throw new Error(`recipe is missing '${key}'`);
  }
  const directions = recipe.directions as unknown[];
  if (!Array.isArray(directions) || directions.length === 0) {
    throw new Error("recipe has no directions");
  }
  const weights = (recipe.weights as unknown[]) ?? new Array(directions.length).fill(1.0);
  if (!Array.isArray(weights) || weights.length !== directions.length) {
    throw new Error("recipe weights and directions differ in length");
  }
  return doc as Recipe;
}

export function recipeFilename(recipe: Recipe): string {
  const hash = recipe.model_hash ? recipe.model_hash.slice(0, 8) : "model";
  return `recipe_${hash}_seed${recipe.seed}.json`;
}

export function recipeText(recipe: Recipe): string {
  return JSON.stringify(recipe, null, 2) + "\n";
}
