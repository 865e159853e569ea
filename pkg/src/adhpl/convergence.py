"""Validation-based stopping rule shared by pre-training and refinement."""

CONTINUE = "continue"
STOP = "stop"


def convergence_check(history, patience, min_delta=0.0):
    """Return ``"stop"`` once the best value has stalled for ``patience`` entries.

    Stalled means none of the last ``patience`` values beats the best of the
    earlier ones by at least ``min_delta``.
    """
    if patience < 1:
        raise ValueError("patience must be >= 1")
    if min_delta < 0:
        raise ValueError("min_delta must be >= 0")
    history = list(history)
    if len(history) <= patience:
        return CONTINUE
    best_before = min(history[:-patience])
    recent = min(history[-patience:])
    return STOP if recent > best_before - min_delta else CONTINUE
