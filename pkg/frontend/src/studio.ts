import { ApiError, StudioApi } from "./api.js";
import {
  CardStore,
  DirectionCard,
  StackEntry,
  cardFromExtract,
  singleApplyParams,
  stackComposeParams,
  stackRecipeParams,
} from "./cards.js";
import { debounce } from "./debounce.js";
import { recipeFilename, recipeText } from "./recipes.js";
import { LatestWins } from "./sequencer.js";
import { ApplyParams, HealthInfo, Recipe } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pngUrl(b64: string): string {
  return `data:image/png;base64,${b64}`;
}

async function fileToBase64(file: File): Promise<string> {
  const dataUrl = await new Promise<string>((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
  return dataUrl.slice(dataUrl.indexOf(",") + 1);
}

interface PairSlot {
  b64: string | null;
  origin: string;
}

export class Studio {
  private api: StudioApi;
  private root: HTMLElement;
  private health: HealthInfo | null = null;
  private store = new CardStore();
  private stack: StackEntry[] = [];
  private activeCard: DirectionCard | null = null;
  private seed = 0;
  private gamma = 1.0;
  private baseImage: string | null = null;
  private shownImage: string | null = null;
  private pair: [PairSlot, PairSlot] = [
    { b64: null, origin: "" },
    { b64: null, origin: "" },
  ];
  private lastRecipe: Recipe | null = null;

  private canvasImg!: HTMLImageElement;
  private gammaSlider!: HTMLInputElement;
  private gammaLabel!: HTMLSpanElement;
  private seedInput!: HTMLInputElement;
  private statusLine!: HTMLElement;
  private errorBanner!: HTMLElement;
  private layerBox!: HTMLElement;
  private cardsBox!: HTMLElement;
  private stackBox!: HTMLElement;
  private pairBox!: HTMLElement;
  private replayBadge!: HTMLElement;

  private renderer: LatestWins<ApplyParams, string>;
  private slideDebounced: ReturnType<typeof debounce<[number]>>;

  constructor(root: HTMLElement, api: StudioApi) {
    this.root = root;
    this.api = api;
    this.renderer = new LatestWins(
      async params => (await this.api.apply(params)).images[0],
      image => this.showFrame(image),
      err => this.showError(err),
    );
    this.slideDebounced = debounce((gamma: number) => this.renderEdit(gamma), 150);
  }

  async mount(): Promise<void> {
    this.buildLayout();
    try {
      this.health = await this.api.health();
      this.describeModel();
      await this.loadSeed(this.seed);
    } catch (err) {
      this.showError(err);
    }
  }

  // ----- layout -------------------------------------------------------

  private buildLayout(): void {
    this.root.innerHTML = "";
    const grid = el("div", "studio");

    const left = el("section", "pane");
    left.appendChild(el("h2", "", "sample"));
    const seedRow = el("div", "row");
    this.seedInput = el("input");
    this.seedInput.type = "number";
    this.seedInput.value = "0";
    const seedGo = el("button", "", "synthesize");
    seedGo.addEventListener("click", () => void this.loadSeed(Number(this.seedInput.value)));
    const seedRand = el("button", "", "random");
    seedRand.addEventListener("click", () => {
      this.seedInput.value = String(Math.floor(Math.random() * 100000));
      void this.loadSeed(Number(this.seedInput.value));
    });
    seedRow.append(this.seedInput, seedGo, seedRand);
    left.appendChild(seedRow);

    left.appendChild(el("h2", "", "image pair"));
    this.pairBox = el("div", "pair");
    left.appendChild(this.pairBox);
    const pairButtons = el("div", "row");
    const useA = el("button", "", "canvas → A");
    useA.addEventListener("click", () => this.fillSlot(0));
    const useB = el("button", "", "canvas → B");
    useB.addEventListener("click", () => this.fillSlot(1));
    pairButtons.append(useA, useB);
    left.appendChild(pairButtons);
    const uploadRow = el("div", "row");
    for (const idx of [0, 1] as const) {
      const input = el("input");
      input.type = "file";
      input.accept = "image/png";
      input.addEventListener("change", () => {
        const file = input.files?.[0];
        if (file) void this.uploadSlot(idx, file);
      });
      uploadRow.appendChild(input);
    }
    left.appendChild(uploadRow);
    const extractBtn = el("button", "primary", "extract transformation");
    extractBtn.addEventListener("click", () => void this.extractPair());
    left.appendChild(extractBtn);

    const mid = el("section", "pane canvas-pane");
    mid.appendChild(el("h2", "", "canvas"));
    this.canvasImg = el("img", "canvas");
    this.canvasImg.alt = "canvas";
    mid.appendChild(this.canvasImg);
    const gammaRow = el("div", "row");
    this.gammaSlider = el("input");
    this.gammaSlider.type = "range";
    this.gammaSlider.min = "-2";
    this.gammaSlider.max = "2";
    this.gammaSlider.step = "0.05";
    this.gammaSlider.value = "1";
    this.gammaSlider.addEventListener("input", () => {
      const gamma = Number(this.gammaSlider.value);
      this.gamma = gamma;
      this.gammaLabel.textContent = `γ = ${gamma.toFixed(2)}`;
      this.slideDebounced(gamma);
    });
    this.gammaLabel = el("span", "gamma-label", "γ = 1.00");
    gammaRow.append(this.gammaSlider, this.gammaLabel);
    mid.appendChild(gammaRow);
    this.layerBox = el("div", "layers");
    mid.appendChild(this.layerBox);
    this.statusLine = el("div", "status", "");
    mid.appendChild(this.statusLine);
    this.errorBanner = el("div", "error hidden", "");
    mid.appendChild(this.errorBanner);

    const right = el("section", "pane");
    right.appendChild(el("h2", "", "directions"));
    this.cardsBox = el("div", "cards");
    right.appendChild(this.cardsBox);
    right.appendChild(el("h2", "", "composition stack"));
    this.stackBox = el("div", "stack");
    right.appendChild(this.stackBox);
    const stackRow = el("div", "row");
    const renderStack = el("button", "", "render stack");
    renderStack.addEventListener("click", () => void this.renderStack());
    const clearStack = el("button", "", "clear");
    clearStack.addEventListener("click", () => {
      this.stack = [];
      this.renderStackBox();
    });
    stackRow.append(renderStack, clearStack);
    right.appendChild(stackRow);
    const exportRow = el("div", "row");
    const exportBtn = el("button", "", "export recipe");
    exportBtn.addEventListener("click", () => void this.exportRecipe());
    const replayBtn = el("button", "", "verify replay");
    replayBtn.addEventListener("click", () => void this.verifyReplay());
    exportRow.append(exportBtn, replayBtn);
    right.appendChild(exportRow);
    this.replayBadge = el("div", "status", "");
    right.appendChild(this.replayBadge);

    grid.append(left, mid, right);
    const header = el("header");
    header.appendChild(el("h1", "", "morphspace studio"));
    this.root.append(header, grid);
    this.renderPairBox();
  }

  private describeModel(): void {
    if (!this.health) return;
    const header = this.root.querySelector("header");
    if (!header) return;
    const info = el(
      "div",
      "model-info",
      `model ${this.health.model_hash} · ${this.health.resolution}×${this.health.resolution} · ` +
        `${this.health.k_layers} layers · t_dim ${this.health.t_dim}`,
    );
    header.appendChild(info);
  }

  // ----- canvas -------------------------------------------------------

  private async loadSeed(seed: number): Promise<void> {
    this.seed = seed;
    try {
      const res = await this.api.generate(seed);
      this.baseImage = res.image;
      this.showFrame(res.image);
      this.clearError();
      this.statusLine.textContent = `seed ${seed}`;
      if (this.activeCard && this.gamma !== 0) this.slideDebounced(this.gamma);
    } catch (err) {
      this.showError(err);
    }
  }

  private showFrame(image: string): void {
    this.shownImage = image;
    this.canvasImg.src = pngUrl(image);
  }

  /** γ=0 must show the untouched base synthesis, so it never issues a request. */
  private renderEdit(gamma: number): void {
    if (!this.activeCard) return;
    this.activeCard.lastGamma = gamma;
    if (gamma === 0 && this.baseImage) {
      this.showFrame(this.baseImage);
      return;
    }
    this.renderer.request(singleApplyParams(this.activeCard, this.seed, gamma));
  }

  private async renderStack(): Promise<void> {
    if (this.stack.length === 0) {
      this.statusLine.textContent = "stack is empty";
      return;
    }
    try {
      const res = await this.api.compose(stackComposeParams(this.stack, this.seed, [this.gamma]));
      if (res.images && res.images.length > 0) this.showFrame(res.images[0]);
      this.statusLine.textContent = `stack rendered · |d| = ${res.norm.toFixed(4)}`;
      this.clearError();
    } catch (err) {
      this.showError(err);
    }
  }

  // ----- pair / extraction --------------------------------------------

  private fillSlot(idx: 0 | 1): void {
    if (!this.shownImage) return;
    this.pair[idx] = { b64: this.shownImage, origin: `seed ${this.seed}` };
    this.renderPairBox();
  }

  private async uploadSlot(idx: 0 | 1, file: File): Promise<void> {
    try {
      this.pair[idx] = { b64: await fileToBase64(file), origin: file.name };
      this.renderPairBox();
    } catch (err) {
      this.showError(err);
    }
  }

  private renderPairBox(): void {
    this.pairBox.innerHTML = "";
    for (const idx of [0, 1] as const) {
      const slot = el("div", "slot");
      const label = idx === 0 ? "A" : "B";
      slot.appendChild(el("div", "slot-label", label));
      const cell = this.pair[idx];
      if (cell.b64) {
        const img = el("img", "thumb");
        img.src = pngUrl(cell.b64);
        slot.appendChild(img);
        slot.appendChild(el("div", "origin", cell.origin));
      } else {
        slot.appendChild(el("div", "origin", "empty"));
      }
      this.pairBox.appendChild(slot);
    }
  }

  private async extractPair(): Promise<void> {
    const [a, b] = this.pair;
    if (!a.b64 || !b.b64) {
      this.statusLine.textContent = "fill both pair slots first";
      return;
    }
    try {
      const res = await this.api.extract(a.b64, b.b64);
      const card = cardFromExtract(res, this.store.nextLabel(), a.b64, b.b64);
      this.store.add(card);
      this.setActiveCard(card);
      this.renderCards();
      this.clearError();
    } catch (err) {
      this.showError(err);
    }
  }

  // ----- cards / stack ------------------------------------------------

  private setActiveCard(card: DirectionCard): void {
    this.activeCard = card;
    this.gamma = card.lastGamma;
    this.gammaSlider.value = String(card.lastGamma);
    this.gammaLabel.textContent = `γ = ${card.lastGamma.toFixed(2)}`;
    this.renderLayerToggles();
    this.renderEdit(this.gamma);
  }

  private renderLayerToggles(): void {
    this.layerBox.innerHTML = "";
    if (!this.activeCard) return;
    this.layerBox.appendChild(el("span", "", "layers:"));
    this.activeCard.layersOn.forEach((on, k) => {
      const toggle = el("label", "layer-toggle");
      const box = el("input");
      box.type = "checkbox";
      box.checked = on;
      box.addEventListener("change", () => {
        const card = this.activeCard;
        if (!card) return;
        card.layersOn[k] = box.checked;
        if (!card.layersOn.some(Boolean)) {
          // an all-off mask would erase the edit; keep the last toggle on
          card.layersOn[k] = true;
          box.checked = true;
          return;
        }
        this.renderEdit(this.gamma);
      });
      toggle.append(box, document.createTextNode(String(k)));
      this.layerBox.appendChild(toggle);
    });
  }

  private renderCards(): void {
    this.cardsBox.innerHTML = "";
    for (const card of this.store.list()) {
      const box = el("div", card === this.activeCard ? "card active" : "card");
      const title = el("div", "card-title", card.label);
      if (card.zeroDirection) {
        title.appendChild(el("span", "badge zero", "zero direction"));
      } else {
        title.appendChild(el("span", "badge", `|d| = ${card.norm.toFixed(4)}`));
      }
      box.appendChild(title);
      const thumbs = el("div", "row");
      for (const thumb of [card.thumbA, card.thumbB]) {
        if (!thumb) continue;
        const img = el("img", "thumb");
        img.src = pngUrl(thumb);
        thumbs.appendChild(img);
      }
      box.appendChild(thumbs);
      const actions = el("div", "row");
      const use = el("button", "", "use");
      use.addEventListener("click", () => {
        this.setActiveCard(card);
        this.renderCards();
      });
      const push = el("button", "", "stack +1");
      push.addEventListener("click", () => this.pushStack(card, 1.0));
      const pushNeg = el("button", "", "stack −1");
      pushNeg.addEventListener("click", () => this.pushStack(card, -1.0));
      actions.append(use, push, pushNeg);
      box.appendChild(actions);
      this.cardsBox.appendChild(box);
    }
  }

  private pushStack(card: DirectionCard, weight: number): void {
    this.stack.push({ card, weight });
    this.renderStackBox();
  }

  private renderStackBox(): void {
    this.stackBox.innerHTML = "";
    this.stack.forEach((entry, i) => {
      const row = el("div", "stack-entry");
      row.appendChild(el("span", "", entry.card.label));
      const weight = el("input", "weight");
      weight.type = "number";
      weight.step = "0.1";
      weight.value = String(entry.weight);
      weight.addEventListener("change", () => {
        entry.weight = Number(weight.value);
      });
      const drop = el("button", "", "×");
      drop.addEventListener("click", () => {
        this.stack.splice(i, 1);
        this.renderStackBox();
      });
      row.append(weight, drop);
      this.stackBox.appendChild(row);
    });
  }

  // ----- recipes ------------------------------------------------------

  private currentRecipeParams(): ApplyParams | null {
    if (this.stack.length > 0) return stackRecipeParams(this.stack, this.seed, this.gamma);
    if (this.activeCard) return singleApplyParams(this.activeCard, this.seed, this.gamma);
    return null;
  }

  private async exportRecipe(): Promise<void> {
    const params = this.currentRecipeParams();
    if (!params) {
      this.statusLine.textContent = "nothing to export";
      return;
    }
    try {
      const { recipe } = await this.api.recipe(params);
      this.lastRecipe = recipe;
      const blob = new Blob([recipeText(recipe)], { type: "application/json" });
      const url = URL.createObjectURL(blob);
      const link = el("a");
      link.href = url;
      link.download = recipeFilename(recipe);
      link.click();
      URL.revokeObjectURL(url);
      this.replayBadge.textContent = `exported ${recipeFilename(recipe)}`;
      this.clearError();
    } catch (err) {
      this.showError(err);
    }
  }

  /** Re-runs the last exported recipe server-side and checks the bytes match
   * the canvas, so reproducibility is visible, not assumed. */
  private async verifyReplay(): Promise<void> {
    if (!this.lastRecipe) {
      this.replayBadge.textContent = "export a recipe first";
      return;
    }
    try {
      const res = await this.api.replay(this.lastRecipe);
      const idx = this.lastRecipe.gammas.indexOf(this.gamma);
      const frame = res.images[idx >= 0 ? idx : 0];
      const matches = frame === this.shownImage;
      this.replayBadge.textContent = matches
        ? "replay matches the canvas byte for byte"
        : "replay differs from the canvas (canvas changed since export?)";
      this.clearError();
    } catch (err) {
      this.showError(err);
    }
  }

  // ----- errors -------------------------------------------------------

  private showError(err: unknown): void {
    const text =
      err instanceof ApiError
        ? `service error (${err.status}${err.field ? `, ${err.field}` : ""}): ${err.message}`
        : `error: ${String(err)}`;
    this.errorBanner.textContent = text;
    this.errorBanner.classList.remove("hidden");
  }

  private clearError(): void {
    this.errorBanner.textContent = "";
    this.errorBanner.classList.add("hidden");
  }
}
