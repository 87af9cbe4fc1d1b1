import { ApiClient } from "./api.js";
import { createConsole } from "./console.js";

const params = new URLSearchParams(location.search);
const base = params.get("gateway") ?? "http://127.0.0.1:8710";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app container");
}
const console_ = createConsole(root, new ApiClient(base), { pollMs: 2000 });
const user = params.get("user");
if (user) {
  console_.setUser(user);
  void console_.pollNow();
}
