"""Exception types shared across the package."""


class CountycastError(Exception):
    """Base class for all countycast errors."""


class ConfigError(CountycastError):
    """Run configuration is missing required entries or is inconsistent."""


class BadFips(CountycastError):
    def __init__(self, code, row=None):
        self.code = code
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"invalid FIPS code {code!r}{where}")


class NegativeCount(CountycastError):
    def __init__(self, index, value):
        self.index = index
        self.value = value
        super().__init__(f"negative cumulative count {value} at index {index}")


class WindowOutOfRange(CountycastError):
    def __init__(self, k, end_day):
        self.k = k
        self.end_day = end_day
        super().__init__(f"window of {k} values does not fit before day {end_day}")


class SchemaMismatch(CountycastError):
    def __init__(self, path, detail):
        self.path = str(path)
        self.detail = detail
        super().__init__(f"{path}: {detail}")


class ParseError(CountycastError):
    def __init__(self, row, column, detail):
        self.row = row
        self.column = column
        self.detail = detail
        super().__init__(f"row {row}, column {column!r}: {detail}")


class CalendarMismatch(CountycastError):
    def __init__(self, fips, detail):
        self.fips = fips
        self.detail = detail
        super().__init__(f"county {fips}: {detail}")


class OrphanCounty(CountycastError):
    def __init__(self, fips, referenced_by):
        self.fips = fips
        self.referenced_by = referenced_by
        super().__init__(f"county {fips} referenced by {referenced_by} has no series")


class UnknownCounty(CountycastError):
    def __init__(self, hospital_id, fips):
        self.hospital_id = hospital_id
        self.fips = fips
        super().__init__(f"hospital {hospital_id}: county {fips} not in panel")


class DuplicateHospital(CountycastError):
    def __init__(self, hospital_id):
        self.hospital_id = hospital_id
        super().__init__(f"duplicate hospital id {hospital_id}")


class NonPositiveEmployees(CountycastError):
    def __init__(self, hospital_id, employees):
        self.hospital_id = hospital_id
        self.employees = employees
        super().__init__(f"hospital {hospital_id}: employees must be >= 1, got {employees}")


class DegenerateWindow(CountycastError):
    def __init__(self, n, min_points):
        self.n = n
        self.min_points = min_points
        super().__init__(f"only {n} usable points in window, need {min_points}")


class NonFiniteLoss(CountycastError):
    def __init__(self, predictor, value):
        self.predictor = predictor
        self.value = value
        super().__init__(f"non-finite loss {value} for predictor {predictor}")


class StaleState(CountycastError):
    def __init__(self, last_scored, required):
        self.last_scored = last_scored
        self.required = required
        super().__init__(
            f"ensemble state last scored day {last_scored} is older than required {required}"
        )


class InsufficientHistory(CountycastError):
    def __init__(self, n):
        self.n = n
        super().__init__(f"only {n} usable scored pairs, interval construction needs 5")


class MissingActual(CountycastError):
    def __init__(self, fips, day):
        self.fips = fips
        self.day = day
        super().__init__(f"no realized actual for county {fips} at day {day}")


class InsufficientWarmup(CountycastError):
    def __init__(self, detail):
        self.detail = detail
        super().__init__(detail)


class NoHospitals(CountycastError):
    def __init__(self, fips):
        self.fips = fips
        super().__init__(f"county {fips} has no hospitals to receive its imputed value")
