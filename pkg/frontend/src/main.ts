/** Browser entry point: ?server=ws://host:port&user=alice&session=studio */

import { SplatSpaceApp } from "./app.js";
import { WebSocketTransport } from "./transport.js";

const params = new URLSearchParams(window.location.search);
const server = params.get("server") ?? "ws://127.0.0.1:7444";
const user = params.get("user") ?? `guest-${Math.floor(Math.random() * 1e6)}`;
const session = params.get("session") ?? "studio";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
const app = new SplatSpaceApp(root, new WebSocketTransport(server), { user, session });
void app.join();

declare global {
  interface Window {
    splatspace?: SplatSpaceApp;
  }
}
window.splatspace = app;
