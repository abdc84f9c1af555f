"""Runs a QuixBugs-style JSON testcase file against a candidate module.

usage: python3 quixbugs_json.py <function_name>
Expects <function_name>.py and testcases.json in the working directory.
Prints one line per failing case and a final RESULT line.
"""
import importlib.util
import json
import sys
import types


def load(path, name):
    spec = importlib.util.spec_from_file_location(name, path)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return getattr(module, name)


def same(actual, expected):
    if isinstance(actual, float) or isinstance(expected, float):
        try:
            return abs(float(actual) - float(expected)) <= 1e-6 * max(1.0, abs(float(expected)))
        except (TypeError, ValueError):
            return False
    if isinstance(actual, (list, tuple)) and isinstance(expected, (list, tuple)):
        return len(actual) == len(expected) and all(same(a, e) for a, e in zip(actual, expected))
    return actual == expected


def short(value):
    text = repr(value)
    return text if len(text) <= 200 else text[:200] + "..."


def main():
    name = sys.argv[1]
    fn = load(name + ".py", name)
    passed = failed = 0
    with open("testcases.json") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            args, expected = json.loads(line)
            if not isinstance(args, list):
                args = [args]
            try:
                out = fn(*args)
                if isinstance(out, types.GeneratorType):
                    out = list(out)
            except Exception as exc:  # noqa: BLE001
                failed += 1
                print("case %s: raised %s: %s" % (short(args), type(exc).__name__, exc))
                continue
            if same(out, expected):
                passed += 1
            else:
                failed += 1
                print("case %s: expected %s, got %s" % (short(args), short(expected), short(out)))
    print("RESULT passed=%d failed=%d" % (passed, failed))
    sys.exit(0 if failed == 0 else 1)


if __name__ == "__main__":
    main()
