"""Regenerate the synthetic files shipped in src/cqed/data.

g2_tags.cqtt: two detectors behind a 50/50 splitter watching a blinking
single emitter (dip recovery 3.3 ns, bunching amplitude 0.33, bunching time
100 ns), each detector with 1.35/sqrt(2) ns jitter so that the
cross-correlation is smeared by 1.35 ns.

finesse_exponential.csv / finesse_depletion.csv: finesse versus days for the
two loss laws with 0.2 % Gaussian noise and a sigma column.
"""

import math
from pathlib import Path

import numpy as np

from cqed.fitters.models import finesse_from_losses, loss_depletion, loss_exponential_growth
from cqed.io import TimeTagFile, write_csv, write_timetags
from cqed.photostat import simulate_hbt_split, synthetic_emitter_stream

DATA = Path(__file__).resolve().parents[1] / "src" / "cqed" / "data"
T_TOTAL = 60e-6
RECOVERY = 3.3e-9
B = 0.33
TAU_B = 100e-9


def g2_tags(seed=2024, duration=0.05, rate_excite=3e6, jitter=1.35e-9):
    rate_emit = 1 / RECOVERY - rate_excite
    k_on = 1 / (TAU_B * (1 + B))
    stream = synthetic_emitter_stream(rate_excite, rate_emit, duration, seed, k_off=B * k_on, k_on=k_on)
    s1, s2 = simulate_hbt_split(stream, seed + 1, jitter_sigma=jitter / math.sqrt(2))
    s1.detector, s2.detector = 0, 1
    return TimeTagFile.from_streams([s1, s2])


def finesse_table(law, seed):
    rng = np.random.default_rng(seed)
    if law == "exponential":
        t = np.linspace(0, 40, 81)
        loss = loss_exponential_growth(t, 40e-6, 10e-6, 14.5)
    else:
        t = np.linspace(0, 3000, 121)
        loss = loss_depletion(t, 100e-6, 150e-6, 1670.0)
    f = finesse_from_losses(loss, T_TOTAL)
    sigma = 2e-3 * f
    return {"t_days": t, "finesse": f + sigma * rng.normal(size=t.size), "sigma": sigma}


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    write_timetags(DATA / "g2_tags.cqtt", g2_tags())
    for i, law in enumerate(("exponential", "depletion")):
        write_csv(DATA / f"finesse_{law}.csv", finesse_table(law, 10 + i),
                  header_comment=f"synthetic finesse decay, law={law}, T_total={T_TOTAL}")
    for p in sorted(DATA.iterdir()):
        print(p.name, p.stat().st_size)


if __name__ == "__main__":
    main()
