"""Exception hierarchy shared by all modules."""


class BilliardError(Exception):
    """Base class for domain failures (CLI exit code 1)."""


class SceneError(BilliardError):
    """Malformed or invalid obstacle configuration."""


class Violation(SceneError):
    """No-eclipse condition fails for the listed (i, j, k) triples (1-based)."""

    def __init__(self, triples, message=None):
        self.triples = list(triples)
        super().__init__(message or f"no-eclipse violated for triples {self.triples}")


class EclipseUndecidable(SceneError):
    def __init__(self, triples, clearance):
        self.triples = list(triples)
        self.clearance = clearance
        super().__init__(
            f"approximate no-eclipse test inconclusive for {self.triples} "
            f"(clearance {clearance:.3g})"
        )


class NonConvergence(BilliardError):
    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class DegenerateSegment(BilliardError):
    pass


class WordError(BilliardError):
    """Symbolic word fails an admissibility rule."""


class InadmissibleAt(WordError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"consecutive symbols equal at position {index}")


class OutOfAlphabet(WordError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"symbol at position {index} is outside the alphabet")


class CyclicSeam(WordError):
    def __init__(self):
        super().__init__("periodic block starts and ends with the same symbol")


class WordTooShort(WordError):
    pass


class PoorFit(BilliardError):
    def __init__(self, message, C=None, delta=None, r2=None):
        self.C, self.delta, self.r2 = C, delta, r2
        super().__init__(message)


class BudgetExceeded(BilliardError):
    pass


class GraphNotStronglyConnected(BilliardError):
    pass


class CycleBudgetExceeded(BudgetExceeded):
    pass


class NoValidJ(BilliardError):
    """No seam symbol exists (alphabet has fewer than three symbols)."""


class SeamImpossible(NoValidJ):
    pass


class BudgetUnsatisfiable(BilliardError):
    pass


class SpecViolation(BilliardError):
    def __init__(self, inequality, message=None):
        self.inequality = inequality
        super().__init__(message or f"hypothesis fails: {inequality}")
