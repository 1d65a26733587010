"""Exception hierarchy shared by all podlab modules."""


class PodlabError(Exception):
    """Base class for all domain errors raised by podlab."""


class LtiError(PodlabError):
    pass


class PlantError(PodlabError):
    pass


class ChannelError(PodlabError):
    pass


class DelayModelError(PodlabError):
    pass


class SysidError(PodlabError):
    pass


class DesignError(PodlabError):
    pass


class NyquistLimitError(DesignError):
    """A requested mode lies above the channel Nyquist frequency."""

    def __init__(self, mode_freq_hz: float, f_max_hz: float):
        self.mode_freq_hz = mode_freq_hz
        self.f_max_hz = f_max_hz
        super().__init__(
            f"NY-LIMIT: mode at {mode_freq_hz:g} Hz exceeds the channel "
            f"Nyquist frequency {f_max_hz:g} Hz"
        )


class InfeasibleOperatingPointError(DesignError):
    pass


class AnalysisError(PodlabError):
    pass


class SimulationError(PodlabError):
    pass


class ConfigError(PodlabError):
    pass
