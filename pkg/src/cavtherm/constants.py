"""Unit conventions and physical constants.

Every energy, rate, and frequency in this package is stored as an energy in
meV (hbar = 1 internally).  Converting a rate or angular frequency from meV
to 1/ps multiplies by ``MEV_TO_INV_PS``; time is always in ps, temperature
in K, in-plane wavevectors in 1/um, areas in um^2, molecule sizes in nm.
"""

# Boltzmann constant in meV per kelvin.
KB_MEV_PER_K = 0.08617333

# 1 meV corresponds to this many rad/ps (equivalently, a rate stored as an
# energy gamma in meV is gamma * MEV_TO_INV_PS in 1/ps).
MEV_TO_INV_PS = 1.519267


def thermal_energy(temperature_k: float) -> float:
    """k_B * T in meV."""
    return KB_MEV_PER_K * temperature_k
