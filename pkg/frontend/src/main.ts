import { Store } from "./store.js";
import { buildUi } from "./ui.js";

const DEFAULT_SERVICE = "http://127.0.0.1:8765";

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const params = new URLSearchParams(window.location.search);
  const store = new Store(params.get("service") ?? DEFAULT_SERVICE);
  buildUi(root, store);
  void store.connect();
}

boot();
