"""Exception types.

Everything raised for a geometric or numerical reason derives from
:class:`SLCVError`; the CLI maps those to exit code 2.  Malformed input files
raise :class:`InputError` (exit code 1).
"""


class SLCVError(Exception):
    """Base class for geometric/numerical failures."""


class InputError(ValueError):
    """Malformed or inconsistent user input (files, flags, specs)."""


# geometry
class DegenerateInput(SLCVError):
    pass


class DegenerateCamera(SLCVError):
    pass


class RankDeficient(SLCVError):
    pass


class SingularTransform(SLCVError):
    pass


class ContainedLine(SLCVError):
    """A line lies inside the plane it was supposed to meet."""


# variety
class UnluckyFactorDraw(SLCVError):
    pass


class NearCenterPlane(SLCVError):
    pass


class DegenerateConfiguration(SLCVError):
    pass


class DegeneratePencil(SLCVError):
    pass


class NonGenericConfiguration(SLCVError):
    pass


# cost
class IllConditioned(SLCVError):
    pass


class DegenerateAdjoint(SLCVError):
    pass


class ZeroMatrix(SLCVError):
    pass


# search
class AllInfeasible(SLCVError):
    pass


class UnderConstrained(SLCVError):
    pass


class DegenerateSolution(SLCVError):
    pass


# upgrade
class NonDefiniteIAC(SLCVError):
    pass


class ComplexPlane(SLCVError):
    pass


class NoObservations(SLCVError):
    pass


class TooFewSegments(SLCVError):
    pass


# simkit
class SpecInfeasible(SLCVError):
    pass


class Mismatch(SLCVError):
    pass
