"""Shared record of acceptance outcomes, printed at the end of the session."""

RESULTS: list[tuple[int, bool, str]] = []


def record(number: int, passed: bool, detail: str) -> bool:
    RESULTS.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return bool(passed)
