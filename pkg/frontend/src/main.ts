/**
 * Bootstrap: configuration comes from query parameters —
 * ``?base=http://host:port&campaign=ID&subject=RATER`` (base defaults to
 * the page origin).
 */

import { ApiClient } from "./api.js";
import { SessionMachine } from "./state.js";
import { bind, collectRefs, render } from "./ui.js";

function config(): { base: string; campaign: string; subject: string } {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("base") ?? window.location.origin;
  const campaign = params.get("campaign") ?? "";
  const subject = params.get("subject") ?? "";
  if (!campaign || !subject) {
    throw new Error("missing ?campaign= or ?subject= query parameter");
  }
  return { base, campaign, subject };
}

function start(): void {
  const { base, campaign, subject } = config();
  const refs = collectRefs(document);
  const api = new ApiClient(base);
  const machine: SessionMachine = new SessionMachine(api, campaign, (view) =>
    render(view, refs, machine),
  );
  bind(machine, refs, subject);
  void machine.start(subject);
}

window.addEventListener("DOMContentLoaded", start);
