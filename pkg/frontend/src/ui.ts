/**
 * DOM bindings: renders a SessionView and forwards widget events to the
 * state machine. Images display letterboxed at 512x512; keyboard shortcuts
 * y / n answer the question, Enter submits when enabled.
 */

import { Dimension, DIMENSIONS, SessionMachine, SessionView } from "./state.js";

const DIMENSION_LABELS: Record<Dimension, string> = {
  quality: "Perceptual quality",
  alignment: "Editing alignment",
  preservation: "Attribute preservation",
};

export interface UiRefs {
  root: HTMLElement;
  sourceImage: HTMLImageElement;
  editedImage: HTMLImageElement;
  prompt: HTMLElement;
  question: HTMLElement;
  progress: HTMLElement;
  status: HTMLElement;
  sliders: Record<Dimension, HTMLInputElement>;
  sliderValues: Record<Dimension, HTMLElement>;
  yesButton: HTMLButtonElement;
  noButton: HTMLButtonElement;
  submitButton: HTMLButtonElement;
  restartButton: HTMLButtonElement;
}

export function collectRefs(document: Document): UiRefs {
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = document.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
  };
  const sliders = {} as Record<Dimension, HTMLInputElement>;
  const sliderValues = {} as Record<Dimension, HTMLElement>;
  for (const dim of DIMENSIONS) {
    sliders[dim] = byId<HTMLInputElement>(`slider-${dim}`);
    sliderValues[dim] = byId(`value-${dim}`);
  }
  return {
    root: byId("app"),
    sourceImage: byId<HTMLImageElement>("source-image"),
    editedImage: byId<HTMLImageElement>("edited-image"),
    prompt: byId("prompt"),
    question: byId("question"),
    progress: byId("progress"),
    status: byId("status"),
    sliders,
    sliderValues,
    yesButton: byId<HTMLButtonElement>("answer-yes"),
    noButton: byId<HTMLButtonElement>("answer-no"),
    submitButton: byId<HTMLButtonElement>("submit"),
    restartButton: byId<HTMLButtonElement>("restart"),
  };
}

export function bind(
  machine: SessionMachine,
  refs: UiRefs,
  subjectId: string,
): void {
  for (const dim of DIMENSIONS) {
    refs.sliders[dim].addEventListener("input", () => {
      machine.setSlider(dim, Number(refs.sliders[dim].value));
    });
  }
  refs.yesButton.addEventListener("click", () => machine.setQaAnswer(true));
  refs.noButton.addEventListener("click", () => machine.setQaAnswer(false));
  refs.submitButton.addEventListener("click", () => void machine.submit());
  refs.restartButton.addEventListener("click", () => void machine.start(subjectId));
  refs.root.ownerDocument.addEventListener("keydown", (event) => {
    if (event.key === "y") machine.setQaAnswer(true);
    else if (event.key === "n") machine.setQaAnswer(false);
    else if (event.key === "Enter") void machine.submit();
  });
}

export function render(view: SessionView, refs: UiRefs, machine: SessionMachine): void {
  refs.root.dataset.phase = view.phase;
  refs.progress.textContent = `${view.answered} / ${view.total}`;
  refs.status.textContent = view.status ?? "";

  const item = view.item;
  if (item) {
    refs.sourceImage.src = item.source_url;
    refs.editedImage.src = item.edited_url;
    refs.prompt.textContent = item.instruction;
    refs.question.textContent = item.qa_question;
  } else {
    refs.sourceImage.removeAttribute("src");
    refs.editedImage.removeAttribute("src");
    refs.prompt.textContent = "";
    refs.question.textContent = "";
  }

  for (const dim of DIMENSIONS) {
    const value = view.sliders[dim];
    refs.sliders[dim].disabled = view.phase !== "rating";
    if (value === undefined) {
      // untouched slider shows the midpoint but reports no value
      refs.sliders[dim].value = "3";
      refs.sliderValues[dim].textContent = `${DIMENSION_LABELS[dim]}: —`;
    } else {
      refs.sliders[dim].value = String(value);
      refs.sliderValues[dim].textContent =
        `${DIMENSION_LABELS[dim]}: ${value.toFixed(1)}`;
    }
  }

  refs.yesButton.classList.toggle("selected", view.qaAnswer === true);
  refs.noButton.classList.toggle("selected", view.qaAnswer === false);
  refs.yesButton.disabled = view.phase !== "rating";
  refs.noButton.disabled = view.phase !== "rating";
  refs.submitButton.disabled = !machine.canSubmit();
  refs.restartButton.hidden = view.phase !== "expired" && view.phase !== "error";
}
