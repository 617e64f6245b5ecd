import { ValidationError, postRating } from "./api.js";
import { RetryOptions } from "./api.js";
import { Session } from "./session.js";
import { PairInfo } from "./types.js";

export interface UiOptions extends RetryOptions {
  base?: string;
}

const SCALE_LABELS = ["1 - Bad", "2 - Poor", "3 - Fair", "4 - Good", "5 - Excellent"];

function scaleFieldset(name: string, legend: string): HTMLFieldSetElement {
  const fieldset = document.createElement("fieldset");
  fieldset.className = "scale";
  const caption = document.createElement("legend");
  caption.textContent = legend;
  fieldset.appendChild(caption);
  for (let value = 1; value <= 5; value++) {
    const label = document.createElement("label");
    const input = document.createElement("input");
    input.type = "radio";
    input.name = name;
    input.value = String(value);
    label.appendChild(input);
    label.appendChild(document.createTextNode(" " + SCALE_LABELS[value - 1]));
    fieldset.appendChild(label);
  }
  return fieldset;
}

function selectedScore(root: HTMLElement, name: string): number | null {
  const checked = root.querySelector<HTMLInputElement>(`input[name="${name}"]:checked`);
  return checked === null ? null : Number(checked.value);
}

function player(title: string, url: string): HTMLElement {
  const section = document.createElement("section");
  section.className = "player";
  const heading = document.createElement("h3");
  heading.textContent = title;
  const audio = document.createElement("audio");
  audio.controls = true;
  audio.src = url;
  audio.preload = "auto";
  section.appendChild(heading);
  section.appendChild(audio);
  return section;
}

function completionScreen(session: Session): HTMLElement {
  const div = document.createElement("div");
  div.className = "complete";
  const heading = document.createElement("h2");
  heading.textContent = "Session complete - thank you!";
  div.appendChild(heading);
  const means = session.personalMeans();
  if (means !== null) {
    const summary = document.createElement("p");
    summary.className = "personal-means";
    summary.textContent =
      `Your mean ratings: quality ${means.quality.toFixed(2)}, ` +
      `similarity ${means.similarity.toFixed(2)} over ${session.submittedCount()} pairs.`;
    div.appendChild(summary);
  }
  return div;
}

/** Render the current step of the session into root; re-renders on advance. */
export function renderApp(root: HTMLElement, session: Session, options: UiOptions = {}): void {
  root.textContent = "";
  if (session.isComplete()) {
    root.appendChild(completionScreen(session));
    return;
  }
  const pair = session.current() as PairInfo;
  const base = options.base ?? "";

  if (session.submittedCount() === 0) {
    const banner = document.createElement("div");
    banner.className = "banner";
    banner.setAttribute("role", "note");
    banner.textContent = "Please use headphones for accurate assessment.";
    root.appendChild(banner);
  }

  const progress = document.createElement("p");
  progress.className = "progress";
  progress.textContent = `Pair ${session.submittedCount() + 1} of ${session.pairs.length}`;
  root.appendChild(progress);

  const form = document.createElement("form");
  form.className = "rating-form";
  form.appendChild(player("Original", base + pair.original_url));
  form.appendChild(player("Cloned", base + pair.cloned_url));
  form.appendChild(scaleFieldset("quality", "Quality"));
  form.appendChild(scaleFieldset("similarity", "Similarity"));

  const error = document.createElement("p");
  error.className = "error";
  error.hidden = true;
  form.appendChild(error);

  const submit = document.createElement("button");
  submit.type = "submit";
  submit.textContent = "Submit rating";
  submit.disabled = true;
  form.appendChild(submit);

  form.addEventListener("change", () => {
    submit.disabled = !session.canSubmit(
      selectedScore(form, "quality"), selectedScore(form, "similarity"),
    );
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const quality = selectedScore(form, "quality");
    const similarity = selectedScore(form, "similarity");
    if (!session.canSubmit(quality, similarity) || submit.disabled) {
      return;
    }
    submit.disabled = true; // one in-flight POST at a time
    error.hidden = true;
    postRating(base, {
      rater_id: session.token,
      pair_id: pair.pair_id,
      quality: quality as number,
      similarity: similarity as number,
    }, options)
      .then(() => {
        session.markSubmitted(pair.pair_id, {
          quality: quality as number,
          similarity: similarity as number,
        });
        renderApp(root, session, options);
      })
      .catch((failure) => {
        submit.disabled = false;
        error.hidden = false;
        error.textContent = failure instanceof ValidationError
          ? `The service rejected this rating: ${failure.message}`
          : "Could not reach the rating service. Your rating was not lost - please retry.";
      });
  });

  root.appendChild(form);
}
