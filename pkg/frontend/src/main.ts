import { ConsoleApp } from "./app.js";

// Served by the core HTTP service under /console; the API lives at the
// same origin's root, so an empty base keeps every request same-origin.
const app = new ConsoleApp({
  document,
  base: "",
  fetchImpl: window.fetch.bind(window),
});
app.start();
