# modules/errors.py
from typing import Optional


class CgnnError(Exception):
    """Base class for every error the library raises on purpose."""


class GraphError(CgnnError, ValueError):
    """Bad node ids, non-bijective permutations, size mismatches."""


class AbsorbingNodeError(GraphError):
    """A node has no out-edge; rewire or add self-loops first."""
    def __init__(self, nodes):
        self.nodes = list(nodes)
        shown = ", ".join(str(n) for n in self.nodes[:10])
        more = "" if len(self.nodes) <= 10 else f" (+{len(self.nodes) - 10} more)"
        super().__init__(f"absorbing node(s) with out-degree 0: {shown}{more}")


class ConvergenceError(CgnnError):
    pass


class DegenerateOperatorError(CgnnError):
    pass


class DenseCapError(CgnnError):
    """Dense N x N path requested above the configured cap."""
    def __init__(self, n: int, cap: int, hint: str = "use the per-edge low-rank path"):
        self.n = n
        self.cap = cap
        super().__init__(f"N={n} exceeds dense cap {cap}; {hint}")


class DatasetFormatError(CgnnError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class ConfigError(CgnnError):
    pass


class StageError(CgnnError):
    """Pipeline failure tagged with the stage it happened in."""
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
