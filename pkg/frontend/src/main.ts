import { StudioApi } from "./api.js";
import { Studio } from "./studio.js";

const root = document.getElementById("app");
if (root) {
  const studio = new Studio(root, new StudioApi(""));
  void studio.mount();
}
