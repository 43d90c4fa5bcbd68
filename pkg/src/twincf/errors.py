"""Exception hierarchy shared by every module."""


class TwinCFError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""

    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class SpecError(TwinCFError):
    kind = "InvalidSpec"


class CycleDetected(SpecError):
    kind = "CycleDetected"

    def __init__(self, edge: tuple[str, str]):
        self.edge = edge
        super().__init__(f"cycle detected through back edge {edge[0]} -> {edge[1]}")


class PartialMechanism(SpecError):
    kind = "PartialMechanism"

    def __init__(self, child: str, missing: tuple[int, ...], detail: str = ""):
        self.child = child
        self.missing = missing
        msg = f"mechanism for {child!r} does not cover parent tuple {missing}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class BadDistribution(SpecError):
    kind = "BadDistribution"

    def __init__(self, variable: str, total: float, detail: str = ""):
        self.variable = variable
        self.total = total
        msg = f"latent {variable!r} has probabilities summing to {total!r}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class UnknownVariable(TwinCFError):
    kind = "UnknownVariable"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown variable {name!r}")


class LatentIntervention(TwinCFError):
    kind = "LatentIntervention"

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"cannot intervene on latent variable {name!r}")


class EnumerationTooLarge(TwinCFError):
    kind = "EnumerationTooLarge"

    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(
            f"latent support has {size} joint configurations, above the cap of {cap}; "
            "use a Monte Carlo method"
        )


class ZeroEvidence(TwinCFError):
    kind = "ZeroEvidence"

    def __init__(self, evidence, prob: float):
        self.evidence = evidence
        self.prob = prob
        super().__init__(f"evidence {evidence} has probability {prob:.3g}")


class NoAcceptedSamples(TwinCFError):
    kind = "NoAcceptedSamples"

    def __init__(self, n: int, evidence=None):
        self.n = n
        super().__init__(f"no sample out of {n} matched the evidence {evidence}")


class NonBinary(TwinCFError):
    kind = "NonBinary"


class NoMatch(TwinCFError):
    kind = "NoMatch"

    def __init__(self, treatment: int):
        self.treatment = treatment
        super().__init__(
            f"no rows received treatment {treatment}; overlap fails for matching"
        )


class NonFiniteLoss(TwinCFError):
    kind = "NonFiniteLoss"

    def __init__(self, epoch: int, batch: int):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"loss became non-finite at epoch {epoch}, batch {batch}")
