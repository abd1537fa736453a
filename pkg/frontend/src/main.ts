/** Browser entry point: DOM wiring around the pure controller. */

import { ApiClient } from "./api.js";
import { StudyController } from "./controller.js";
import { renderApp } from "./render.js";

function mount(root: HTMLElement): StudyController {
  const api = new ApiClient((url, init) => fetch(url, init));
  const controller = new StudyController(api, (state) => {
    root.innerHTML = renderApp(state);
  });

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    if (target === null) {
      return;
    }
    const figure = target.closest("[data-candidate]");
    if (figure instanceof HTMLElement && figure.dataset["candidate"]) {
      controller.select(figure.dataset["candidate"]);
      return;
    }
    if (target.closest("#submit") !== null) {
      void controller.submit();
    }
  });

  document.addEventListener("keydown", (event) => {
    if (event.key >= "1" && event.key <= "6") {
      controller.selectDigit(Number(event.key));
    } else if (event.key === "Enter") {
      void controller.submit();
    }
  });

  void controller.start();
  return controller;
}

const root = document.getElementById("app");
if (root !== null) {
  mount(root);
}
