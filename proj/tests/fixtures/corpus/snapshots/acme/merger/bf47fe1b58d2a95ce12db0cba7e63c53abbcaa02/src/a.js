function a(x) {
  if (x) {
    return eval(x);
  }
  return null;
}
