// Browser entry point: small connect form, then hand the page to GraderApp.

import { GradingApi } from './api.js';
import { GraderApp } from './ui.js';

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

window.addEventListener('DOMContentLoaded', () => {
  const form = byId<HTMLFormElement>('connect-form');
  const errorLine = byId<HTMLElement>('connect-error');

  form.addEventListener('submit', (e) => {
    e.preventDefault();
    const server = byId<HTMLInputElement>('server-url').value.trim();
    const studyId = byId<HTMLInputElement>('study-id').value.trim();
    const graderId = byId<HTMLInputElement>('grader-id').value.trim();
    if (!server || !studyId || !graderId) {
      errorLine.textContent = 'server, study and grader are all required';
      return;
    }

    const app = new GraderApp(byId('app'), new GradingApi(server));
    app
      .start(studyId, graderId)
      .then(() => {
        form.hidden = true;
        errorLine.textContent = '';
      })
      .catch((err: unknown) => {
        errorLine.textContent =
          err instanceof Error ? `could not open session: ${err.message}` : 'could not open session';
      });
  });
});
