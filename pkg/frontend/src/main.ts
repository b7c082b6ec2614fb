import { Api } from "./api.js";
import { AnnotatorApp } from "./app.js";

// served from the engine at /ui; the API lives on the same origin
const app = new AnnotatorApp(document.getElementById("app")!, new Api(""));
void app.start();
