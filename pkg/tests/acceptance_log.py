"""Collects one verdict line per acceptance criterion."""
_LINES = {}


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    _LINES[number] = line
    print(line)
    return passed


def lines():
    return [_LINES[k] for k in sorted(_LINES)]
