"""
Counting electrons through the conductor
========================================

The sensitivity factor converts a forbidden-transition probability into an
expected number of signal X-rays.
"""
# %%
#

from vipsim.electron_flow import (
    SECONDS_PER_DAY,
    CurrentSchedule,
    ElectronFlowModel,
    count_new_electrons,
    count_scatterings,
)

# %%
#
# 100 A for 40 days.

schedule = CurrentSchedule.constant(100.0, 40 * SECONDS_PER_DAY)
print(f"charge: {schedule.integrated_charge:.4e} C")
print(f"new electrons: {count_new_electrons(schedule):.4e}")
print(f"scatterings per electron: {count_scatterings(0.1, 3.9e-8):.4e}")

# %%
#
# Splitting the run into segments does not change the count.

split = CurrentSchedule(((100.0, 10 * SECONDS_PER_DAY),) * 4)
print("split identical:", count_new_electrons(split) == count_new_electrons(schedule))

# %%
#
# The model bundles everything into one number.

flow = ElectronFlowModel(schedule)
print(f"sensitivity factor: {flow.sensitivity_factor:.4e}")
print(f"signal counts per 1e-29: {1e-29 * flow.sensitivity_factor:.3f}")
