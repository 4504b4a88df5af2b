"""Shared exception types."""


class CapabilityError(RuntimeError):
    """Requested parameters exceed what this implementation supports.

    Raised e.g. for statevector simulations above the qubit cap or for
    surface-code circuit levels that are not implemented.  The command
    line maps this to its own exit code so schedulers can tell "too big"
    apart from "broken input".
    """


class DegenerateStatisticsError(ValueError):
    """An estimator hit a division by (numerically) zero.

    Happens when detector marginals sit too close to 1/2 for the
    correlation formulas to be invertible, e.g. far above threshold or
    with far too few shots.
    """
