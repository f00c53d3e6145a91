"""Exception hierarchy shared by all modules.

UsageError covers bad arguments and malformed configuration; MethodError
covers failures of the method itself on valid inputs (unreachable precision
targets, diverged training, infeasible sampling requests). The CLI maps
them to exit codes 1 and 2 respectively.
"""


class DomainAuditError(Exception):
    pass


class UsageError(DomainAuditError):
    pass


class MethodError(DomainAuditError):
    pass


class StoreFormatError(MethodError):
    """Raised when a store file is corrupt, truncated, or not a store."""


class TrainingDiverged(MethodError):
    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training loss became non-finite ({loss}) at epoch {epoch}")


class PrecisionUnreachable(MethodError):
    def __init__(self, target: float, max_achievable: float):
        self.target = target
        self.max_achievable = max_achievable
        super().__init__(
            f"precision unreachable: target {target:.4f}, "
            f"max achievable {max_achievable:.4f}"
        )


class InfeasibleSeparation(MethodError):
    pass


class PoolExhausted(MethodError):
    pass


class DegenerateFit(MethodError):
    pass
