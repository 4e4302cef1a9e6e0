"""Energy-efficiency optimisation for an IRS-assisted user network and a
PS-SWIPT IoT network that reuses the user network's phase shifts."""

from phasecoop.scenario import Scenario, TrialStreams, build_scenario, place_receivers
from phasecoop.channel import ChannelRealization, PhaseShifts, draw_channels, effective_channel
from phasecoop.pipeline import SchemeId, EEReport, apply_baseline, run_ao, run_lcas, phase_cooperation, run_trial

__all__ = [
    "Scenario",
    "TrialStreams",
    "build_scenario",
    "place_receivers",
    "ChannelRealization",
    "PhaseShifts",
    "draw_channels",
    "effective_channel",
    "SchemeId",
    "EEReport",
    "apply_baseline",
    "run_ao",
    "run_lcas",
    "phase_cooperation",
    "run_trial",
]

__version__ = "0.1.0"
