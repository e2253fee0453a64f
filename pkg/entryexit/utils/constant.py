class BalanceMethod:
    EIG = "eig"
    FASTSLOW = "fastslow"
    FTLE = "ftle"
    NILE = "nile"
    VELOCITY = "velocity"


class FtleMode:
    EXACT = "exact"
    COMMUTING = "commuting"


class NileForm:
    GEOMETRIC = "geometric"
    LITERAL = "literal"


class Linearization:
    SIMPLIFIED = "simplified"
    EXACT = "exact"


class Extrapolation:
    NONE = "none"
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class ManifoldKind:
    FLAT = "flat"
    GRAPH = "graph"


class QuadratureRule:
    AUTO = "auto"
    SIMPSON = "simpson"
    TRAPEZOID = "trapezoid"


class ExitCode:
    OK = 0
    ERROR = 1
    NOT_FOUND = 2
    USAGE = 64
    NO_INPUT = 66
