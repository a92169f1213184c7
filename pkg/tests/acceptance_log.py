"""PASS/FAIL lines collected by the acceptance suite."""

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}" + (f": {detail}" if detail else "")
    RESULTS.append(line)
    print(line, flush=True)
    return ok
