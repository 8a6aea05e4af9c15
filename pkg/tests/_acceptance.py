"""Collects one line per acceptance criterion for the terminal summary."""

RESULTS = []


def record(criterion: str, passed: bool, detail: str = ""):
    RESULTS.append((criterion, passed, detail))
