import { bootstrap } from "./app.js";

declare global {
  interface Window {
    REGRAG_BASE_URL?: string;
  }
}

const root = document.getElementById("root");
if (root) {
  bootstrap(root, window.REGRAG_BASE_URL ?? "http://127.0.0.1:8000");
}
