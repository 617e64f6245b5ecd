import { fetchPairs } from "./api.js";
import { Session } from "./session.js";
import { renderApp } from "./ui.js";

const TOKEN_KEY = "swarclone-mos-token";

function raterToken(): string {
  let token = localStorage.getItem(TOKEN_KEY);
  if (token === null) {
    token = crypto.randomUUID();
    localStorage.setItem(TOKEN_KEY, token);
  }
  return token;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("#app mount point missing");
  }
  const token = raterToken();
  try {
    const pairs = await fetchPairs("", token);
    const session = new Session(token, pairs, localStorage);
    renderApp(root, session);
  } catch (error) {
    root.textContent = `Could not load the rating session: ${error}`;
  }
}

boot();
