/**
 * Render a template.
 */
function render(tpl, data) {
  return tpl.replace(/\{\{(\w+)\}\}/g, function (m, key) {
    return escape(data[key]);
  });
}

function escape(s) {
  return String(s)
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;');
}

class Cache {
  get(key) {
    return this.store[key];
  }
}
