"""Exception types shared across the package."""


class MatchCrsError(Exception):
    """Base class for package-specific errors."""


class InputError(MatchCrsError):
    """Malformed instance files or invalid user input (CLI exit code 2)."""


class Infeasible(MatchCrsError):
    """A selection rule with the requested marginals does not exist.

    Carries a witness: a subset of element ids whose hit probability is
    below the sum of its targets.
    """

    def __init__(self, witness, deficit=None):
        self.witness = frozenset(witness)
        self.deficit = deficit
        msg = f"no feasible selection rule; violating subset {sorted(self.witness)}"
        if deficit is not None:
            msg += f" (deficit {deficit:.3g})"
        super().__init__(msg)


class DegreeCapExceeded(MatchCrsError):
    def __init__(self, k, cap, where=""):
        self.k = k
        self.cap = cap
        suffix = f" at {where}" if where else ""
        super().__init__(f"ground set of size {k} exceeds cap {cap}{suffix}")


class EdgeNeverAppears(MatchCrsError):
    """Conditioning on presence of an edge with weight zero."""


class NotATree(MatchCrsError):
    """Input graph has a cycle or is disconnected."""


class TooLarge(MatchCrsError):
    """Instance exceeds the cap of an exact (enumeration-based) routine."""


class CalibrationInsufficient(MatchCrsError):
    """An empirically calibrated selection stage cannot meet its targets."""
