"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``InputError`` (bad files, bad configuration, invalid topology) and
``NumericalError`` (the mathematics refused: folds, singular faces, failed
line searches).
"""


class BHFError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class InputError(BHFError):
    code = "input"


class NumericalError(BHFError):
    code = "numerical"


class ParseError(InputError):
    code = "parse"

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class TopologyError(InputError):
    code = "topology"

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class ValidationError(InputError):
    code = "validation"

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class IndexOutOfRange(InputError):
    code = "index"


class ConfigError(InputError):
    code = "config"


class IoError(InputError, OSError):
    code = "io"


class SingularFace(NumericalError):
    code = "singular_face"

    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = list(faces)


class DegenerateTriple(NumericalError):
    code = "degenerate_triple"


class InvalidPoints(NumericalError):
    code = "invalid_points"


class SolveFailure(NumericalError):
    code = "solve_failure"


class OutsideDomain(NumericalError):
    code = "outside_domain"

    def __init__(self, message, queries=()):
        super().__init__(message)
        self.queries = list(queries)


class DegenerateJacobian(NumericalError):
    code = "degenerate_jacobian"

    def __init__(self, message, vertices=()):
        super().__init__(message)
        self.vertices = list(vertices)


class NotAdmissible(NumericalError):
    code = "not_admissible"

    def __init__(self, message, vertices=()):
        super().__init__(message)
        self.vertices = list(vertices)


class FoldDetected(NumericalError):
    code = "fold"

    def __init__(self, message, faces=()):
        super().__init__(message)
        self.faces = list(faces)


class StepFailed(NumericalError):
    code = "step_failed"


class ObtuseDegenerate(UserWarning):
    """Mixed-area fallback was used on obtuse triangles."""
