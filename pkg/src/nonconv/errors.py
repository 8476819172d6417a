"""Exception hierarchy shared by all nonconv modules."""


class NonconvError(Exception):
    """Base class for all package errors."""


class ValidationError(NonconvError):
    """Invalid input: bad schedules, inadmissible words, malformed configs."""


class ScheduleError(ValidationError):
    """An index schedule violates ordering or monotonicity constraints."""


class CertificationError(NonconvError):
    """A model fails a standing structural assumption (e.g. no Doeblin power)."""


class ResourceError(NonconvError):
    """An exact computation would exceed its configured budget."""


class ConfigError(ValidationError):
    """Experiment config rejected; carries the full list of faults."""

    def __init__(self, faults):
        self.faults = list(faults)
        super().__init__("; ".join(self.faults))
