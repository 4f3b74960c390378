"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for physics-level failures (as opposed to bad arguments)."""


class ImprobableBranch(SimulationError):
    """A heralded branch has vanishing probability; the conditioning is degenerate."""


class EpsilonUndefined(SimulationError):
    """The purity ratio has a zero denominator (vacuum-like or product state)."""


class DivergentFixedPoint(SimulationError):
    """The Gaussification fixed point does not exist for these parameters."""


class DisplacedState(SimulationError):
    """A state has non-negligible first moments where zero-mean is required."""


class StructureLeak(SimulationError):
    """The low-photon block picked up entries outside the allowed sparsity pattern."""


class ParameterInfeasible(SimulationError):
    """A protocol parameter (beam-splitter setting, conditioning weight) cannot be solved."""


class InfeasibleStage(ParameterInfeasible):
    """A chain stage cannot be executed; carries the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
