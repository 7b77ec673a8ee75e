import { ConsoleApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8642";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const app = new ConsoleApp(root, { baseUrl });
declare global {
  interface Window {
    apolo: ConsoleApp;
  }
}
window.apolo = app; // handy for poking at the session from devtools
