
class SdeBoundError(Exception):
    pass

class CoefficientError(SdeBoundError, ValueError):
    pass

class DegenerateCoefficientError(CoefficientError):
    pass

class QuadratureError(SdeBoundError, ArithmeticError):
    pass

class PlanError(SdeBoundError, ValueError):
    pass

class PsiRangeError(SdeBoundError, ValueError):
    pass

class PathError(SdeBoundError, ValueError):
    pass

class ObservationError(SdeBoundError, ValueError):
    pass

class DuplicateSiteError(ObservationError):
    pass

class SchemeError(SdeBoundError, RuntimeError):
    pass

class NonTerminatingSchemeError(SchemeError):
    pass

class ConfigError(SdeBoundError, ValueError):
    pass
