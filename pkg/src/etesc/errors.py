class ConfigError(ValueError):
    """Invalid configuration. `problems` holds every failure found, not just the first."""

    def __init__(self, message, problems=None):
        self.problems = list(problems) if problems else [message]
        super().__init__(message)


class CertificateError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


class AnalysisError(ValueError):
    pass
