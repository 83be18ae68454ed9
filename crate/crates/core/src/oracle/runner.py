import contextlib
import io
import json
import math
import sys
import traceback


def _deny(*args, **kwargs):
    raise PermissionError("network access is disabled")


try:
    import socket

    socket.socket = _deny
    socket.create_connection = _deny
    socket.getaddrinfo = _deny
    socket.socketpair = _deny
except Exception:
    pass


def close(a, b, eps):
    if isinstance(a, bool) or isinstance(b, bool):
        return a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= eps
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return type(a) is type(b) and len(a) == len(b) and all(close(x, y, eps) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(close(a[k], b[k], eps) for k in a)
    return a == b


def short(value, limit=512):
    try:
        text = repr(value)
    except BaseException:
        text = "<unrepresentable>"
    return text if len(text) <= limit else text[:limit] + "..."


def main():
    spec_path, result_path = sys.argv[1], sys.argv[2]
    with open(spec_path, encoding="utf-8") as f:
        spec = json.load(f)
    with open("candidate.py", encoding="utf-8") as f:
        source = f.read()
    result = {}
    try:
        code = compile(source, "candidate.py", "exec")
    except (SyntaxError, ValueError) as e:
        result = {"status": "parse_error", "detail": "".join(traceback.format_exception_only(type(e), e)).strip()}
    else:
        buf = io.StringIO()
        namespace = {"__name__": "__candidate__"}
        with contextlib.redirect_stdout(buf), contextlib.redirect_stderr(buf):
            try:
                exec(code, namespace)
                actual = eval(spec["input"], namespace)
                expected = eval(spec["expected"], {})
                eps = spec.get("epsilon")
                ok = close(actual, expected, eps) if eps is not None else actual == expected
                ok = bool(ok)
            except BaseException as e:
                detail = "".join(traceback.format_exception_only(type(e), e)).strip()
                result = {"status": "runtime_error", "detail": detail}
            else:
                if ok:
                    result = {"status": "pass"}
                else:
                    result = {"status": "wrong_output", "detail": "expected %s, got %s" % (short(expected), short(actual))}
        result["output"] = buf.getvalue()[-8192:]
    with open(result_path, "w", encoding="utf-8") as f:
        json.dump(result, f)


main()
