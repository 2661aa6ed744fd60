"""Regenerate the shipped simulation campaigns under ``src/hameng/data/campaigns``.

Each campaign writes ``<name>.csv`` and ``<name>.meta.json``; the metadata is
enough to rerun it with :func:`hameng.simlab.rerun_from_metadata`.
"""

from importlib import resources
from pathlib import Path

from hameng.model import ControlSegment, ControlSequence, EnsembleSpec, NetworkSpec, \
    khz_to_rad_us, read_sequence_csv
from hameng.simlab import SimulationCampaign, autocorrelation

DATA = Path(str(resources.files("hameng") / "data"))
OUT = DATA / "campaigns"

DECOUPLING_ENSEMBLE = dict(sigma_dip=khz_to_rad_us(5.0), sigma_z=khz_to_rad_us(2.5),
                           sigma_eps=0.02, seed=2024)
CROSS_RHOS = (0.0, 0.5, 1.0)


def campaigns() -> list:
    out = []
    net4 = NetworkSpec.all_to_all(4)
    ens = EnsembleSpec(**DECOUPLING_ENSEMBLE)
    eng = read_sequence_csv(DATA / "decoupling_sequence.csv")
    out.append(SimulationCampaign(eng, net4, ens, 100, 50, "x", "decoupling_engineered"))
    idle = ControlSequence((ControlSegment(2.0),))
    out.append(SimulationCampaign(idle, net4, ens, 60, 50, "x", "decoupling_idle"))
    cross = DATA / "crossterm_sequence.csv"
    if cross.exists():
        seq = read_sequence_csv(cross)
        sigma = khz_to_rad_us(2.5)
        for rho in CROSS_RHOS:
            e = EnsembleSpec(sigma, sigma, 0.01, rho, seed=7)
            out.append(SimulationCampaign(seq, net4, e, 150, 200, "x", f"crossterm_rho{rho:g}"))
    return out


def main() -> None:
    OUT.mkdir(exist_ok=True)
    for camp in campaigns():
        res = autocorrelation(camp)
        res.write(OUT / f"{camp.label}.csv", OUT / f"{camp.label}.meta.json")
        print(camp.label, len(res.s_mean), "points")


if __name__ == "__main__":
    main()
