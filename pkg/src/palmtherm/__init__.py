"""palmtherm: simulation and experiment workbench for a palm-worn 3x3
thermoelectric display.

Subsystems: thermoelectric module physics (`tem`), lumped thermal plant
(`plant`, `calibrate`), per-channel PID control (`control`), device layer
with safety clamping and serial framing (`device`, `framing`), spatial
pattern rendering (`patterns`), adaptive psychophysics (`psychophys`,
`stats`), and session orchestration (`session`, `service`, `cli`).
"""

__version__ = "0.1.0"

from palmtherm._kernel import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
