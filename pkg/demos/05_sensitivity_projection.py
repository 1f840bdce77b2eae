"""
Projecting the reach of a longer run
====================================

Median expected limits for zero-signal plans at lower background.
"""
# %%
#

from pathlib import Path

from vipsim import pipeline
from vipsim.config import load_config
from vipsim.electron_flow import SECONDS_PER_DAY

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
cfg = load_config(CONFIGS / "upgrade_3yr.cfg")

proj = pipeline.project(cfg)
print(pipeline.format_projection(cfg, proj))

# %%
#
# With background fixed, the limit improves as the square root of time.

for years in (0.5, 1.0, 1.5, 3.0):
    t = years * 365.25 * SECONDS_PER_DAY
    p = pipeline.project(cfg, on_duration=t, off_duration=t)
    print(f"{years:>4} y each: {p.projected_limit:.3e}")

# %%
#
# And it scales with the background level.

for scale in (1.0, 0.1, 0.01):
    p = pipeline.project(cfg, background_scale=scale)
    print(f"background x{scale:g}: {p.projected_limit:.3e}")
