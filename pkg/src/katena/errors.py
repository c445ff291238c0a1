"""Exception hierarchy shared by all katena modules."""


class KatenaError(Exception):
    """Base class for every error raised by the package."""


class ModelError(KatenaError):
    """The application model could not be parsed into the metamodel."""


class ArtifactError(KatenaError):
    """A compiled contract artifact is missing or malformed."""


class SecretsError(KatenaError):
    pass


class PlanError(KatenaError):
    """A plan cannot be computed (cycles, unknown target, refused destroy)."""


class CycleError(PlanError):
    def __init__(self, cycles):
        self.cycles = cycles
        shown = "; ".join("{" + ",".join(c) + "}" for c in cycles)
        super().__init__(f"hard dependency cycle(s): {shown}")


class LinkError(KatenaError):
    """Bytecode placeholder scanning or substitution failed."""


class AbiError(KatenaError):
    """ABI type parsing, value coercion or encoding failed."""


class PatternError(KatenaError):
    """Diamond/proxy wiring cannot be planned."""


class ChainError(KatenaError):
    """Backend failure: unreachable endpoint, reverted tx, dead target."""


class EndpointError(ChainError):
    pass


class AuthError(EndpointError):
    pass


class TransactionError(ChainError):
    pass


class TargetNotAlive(ChainError):
    pass


class OrchestrationError(KatenaError):
    """Plan execution cannot proceed given the current record."""
