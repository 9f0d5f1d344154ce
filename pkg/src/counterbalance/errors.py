"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class CounterbalanceError(Exception):
    exit_code = 1


# -- ingestion (exit 2) ------------------------------------------------------

class IngestionError(CounterbalanceError):
    exit_code = 2


class MalformedCSV(IngestionError):
    pass


class UnknownColumn(IngestionError):
    pass


class NegativeFlow(IngestionError):
    pass


class SelfFlow(IngestionError):
    pass


class InvalidCountryCode(IngestionError):
    pass


class MissingGdp(IngestionError):
    pass


class NonPositiveGdp(IngestionError):
    pass


class ExportsExceedGdp(IngestionError):
    """Raised when a country's recorded exports are larger than its GDP.

    ``offenders`` maps each offending code to ``(total_exports, gdp)``.
    """

    def __init__(self, offenders):
        self.offenders = dict(offenders)
        detail = ", ".join(
            f"{code} (exports {exp:g} > gdp {gdp:g})"
            for code, (exp, gdp) in sorted(self.offenders.items())
        )
        super().__init__(
            f"exports exceed GDP for: {detail}. Re-export hubs usually need to be "
            "folded into a neighbour with an aggregation map (e.g. HKG, MAC into CHN)."
        )


class AggregationError(IngestionError):
    pass


class GroupCodeCollision(AggregationError):
    pass


# -- solver (exit 3) ---------------------------------------------------------

class SolverError(CounterbalanceError):
    exit_code = 3


class SingularSystem(SolverError):
    pass


class NoConvergence(SolverError):
    def __init__(self, iterations, change):
        self.iterations = iterations
        self.change = change
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(last change {change:.3e})"
        )


class SingularReducedSystem(SolverError):
    pass


class DegenerateDenominator(SolverError):
    def __init__(self, country, value):
        self.country = country
        self.value = value
        super().__init__(
            f"denominator 1 - P for country {country} is {value:.3e}; "
            "the proportional-response matrix is undefined"
        )


class StepTooLarge(SolverError):
    pass


# -- lookups and arguments ---------------------------------------------------

class UnknownCountry(CounterbalanceError, KeyError):
    exit_code = 4

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown country"


class SameCountry(CounterbalanceError, ValueError):
    exit_code = 4


class ZeroBaseEntry(CounterbalanceError, ValueError):
    exit_code = 3


class VerificationFailure(CounterbalanceError):
    exit_code = 5
