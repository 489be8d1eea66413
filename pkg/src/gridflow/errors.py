"""Exception hierarchy shared across the package."""


class GridflowError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GridflowError):
    pass


class UnknownGlyph(GridflowError):
    def __init__(self, glyph: str, row: int, col: int):
        super().__init__(f"unknown glyph {glyph!r} at row {row}, col {col}")
        self.glyph = glyph
        self.row = row
        self.col = col


class GoalOnObstacle(GridflowError):
    pass


class CellOnObstacle(GridflowError):
    pass


class LengthMismatch(GridflowError):
    pass


class DuplicateEndpoint(GridflowError):
    pass


class MalformedLine(GridflowError):
    def __init__(self, index: int, line: str, reason: str = ""):
        detail = f": {reason}" if reason else ""
        super().__init__(f"malformed line {index}: {line!r}{detail}")
        self.index = index
        self.line = line


class UnreachableCell(GridflowError):
    pass


class MissingDistanceField(GridflowError):
    pass


class InvalidTransition(GridflowError):
    pass


class InvalidSolution(GridflowError):
    pass


class CollisionAt(GridflowError):
    def __init__(self, t: int, collisions):
        super().__init__(f"collision while applying field at t={t}")
        self.t = t
        self.collisions = collisions


class AgentNotAtGoal(GridflowError):
    def __init__(self, agent: int, cell, goal):
        super().__init__(f"agent {agent} ended at {cell}, goal {goal}")
        self.agent = agent


class ExpertFailure(GridflowError):
    """Base for expert-solver failures; carries enough context to log."""


class ExpertTimeout(ExpertFailure):
    pass


class Unsolvable(ExpertFailure):
    def __init__(self, agent: int, restarts: int):
        super().__init__(f"no plan for agent {agent} after {restarts} priority restarts")
        self.agent = agent
        self.restarts = restarts


class TooManyAgents(GridflowError):
    pass


class ExpertFailureRateExceeded(GridflowError):
    pass


class ProtocolViolation(GridflowError):
    pass


class PolicyTimeout(GridflowError):
    pass


class MissingBest(GridflowError):
    pass


class OrderViolation(GridflowError):
    pass


class EmptyGroup(GridflowError):
    pass
