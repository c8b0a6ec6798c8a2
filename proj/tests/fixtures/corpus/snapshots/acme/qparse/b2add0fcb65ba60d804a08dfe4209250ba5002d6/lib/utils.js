exports.merge = function merge(target, source) {
  Object.keys(source).forEach(function (key) {
    target[key] = source[key];
  });
  return target;
};

exports.isObj = (x) => x !== null && typeof x === 'object';
