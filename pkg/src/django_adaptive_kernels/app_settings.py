import math
import os
from enum import Enum
from typing import Dict, List

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


class KernelProfile(str, Enum):
    COSINE_BUMP = "cosine_bump"
    """
    Scaled cosine bump `w(y) = (π/(4c))·cos(πy/(2c))` on `[-c, c]` with `c = 1/(2ℓ)`.

    Lipschitz, but its derivative jumps at the support endpoints.
    """

    QUARTIC_SPLINE = "quartic_spline"
    """
    Biweight spline `w(y) = (15/(16c))·(1 - (y/c)²)²` on `[-c, c]` with `c = 1/(2ℓ)`.

    Continuously differentiable on the whole real line.
    """


class AppSettings:
    @property
    def settings(self) -> Dict:
        return getattr(settings, "ADAPTIVE_KERNELS", {})

    @property
    def LIBRARIES(self) -> List:
        return self.settings.get("libraries", [])

    @property
    def OUTPUT_ROOT(self) -> str:
        default = os.environ.get("ADAPTIVE_KERNELS_OUTPUT_ROOT", "lab-output")
        return self.settings.get("output_root", default)

    @property
    def LEVEL_CAP(self) -> int:
        return self._validate_positive_int("level_cap", self.settings.get("level_cap", 40))

    @property
    def R_CAP(self) -> int:
        return self._validate_positive_int("r_cap", self.settings.get("r_cap", 64))

    @property
    def BANDWIDTH_SET_CAP(self) -> int:
        return self._validate_positive_int("bandwidth_set_cap", self.settings.get("bandwidth_set_cap", 256))

    @property
    def ORACLE_GRID_CAP(self) -> int:
        return self._validate_positive_int("oracle_grid_cap", self.settings.get("oracle_grid_cap", 10_000))

    @property
    def BOX_CAP(self) -> int:
        return self._validate_positive_int("box_cap", self.settings.get("box_cap", 64))

    @property
    def VG_RESTARTS(self) -> int:
        return self._validate_positive_int("vg_restarts", self.settings.get("vg_restarts", 64))

    @property
    def QUADRATURE_NODES(self) -> int:
        return self._validate_positive_int("quadrature_nodes", self.settings.get("quadrature_nodes", 2**14))

    @property
    def RESOLVABILITY_CELLS(self) -> int:
        return self._validate_positive_int("resolvability_cells", self.settings.get("resolvability_cells", 2))

    @property
    def BOOTSTRAP_RESAMPLES(self) -> int:
        return self._validate_positive_int("bootstrap_resamples", self.settings.get("bootstrap_resamples", 1000))

    @property
    def MEMBERSHIP_SLACK(self) -> float:
        raw_value = self.settings.get("membership_slack", 0.1)
        if not isinstance(raw_value, (int, float)) or raw_value < 0:
            raise ImproperlyConfigured(f"Invalid membership_slack: {raw_value}. Must be a nonnegative number")
        return float(raw_value)

    @property
    def VERIFY_SEED(self) -> int:
        raw_value = self.settings.get("verify_seed", 20240601)
        if isinstance(raw_value, bool) or not isinstance(raw_value, int) or raw_value < 0:
            raise ImproperlyConfigured(f"Invalid verify_seed: {raw_value}. Must be a nonnegative integer")
        return raw_value

    @property
    def KERNEL_PROFILE(self) -> KernelProfile:
        raw_value = self.settings.get("kernel_profile", KernelProfile.QUARTIC_SPLINE.value)
        return self._validate_kernel_profile(raw_value)

    @property
    def C2_TABLE(self) -> Dict[int, float]:
        """
        Values of the constant `C2(r)` used by the integrability branch of the upper function.

        Keys are integers `r`, values positive reals. Missing keys fall back to `C2(r) = r`.
        """
        raw_value = self.settings.get("c2_table", {})
        return validate_c2_table(raw_value)

    def _validate_kernel_profile(self, raw_value: KernelProfile) -> KernelProfile:
        try:
            return KernelProfile(raw_value)
        except ValueError:
            valid_values = [profile.value for profile in KernelProfile]
            raise ImproperlyConfigured(f"Invalid kernel profile: {raw_value}. Valid options are {valid_values}")

    def _validate_positive_int(self, key: str, raw_value: int) -> int:
        if isinstance(raw_value, bool) or not isinstance(raw_value, int) or raw_value <= 0:
            raise ImproperlyConfigured(f"Invalid {key}: {raw_value}. Must be a positive integer")
        return raw_value


def validate_c2_table(raw_value: Dict) -> Dict[int, float]:
    if not isinstance(raw_value, dict):
        raise ImproperlyConfigured(f"Invalid c2_table: {raw_value!r}. Must be a mapping of r to C2(r)")

    table: Dict[int, float] = {}
    for key, value in raw_value.items():
        try:
            r = int(key)
            c2 = float(value)
        except (TypeError, ValueError):
            raise ImproperlyConfigured(f"Invalid c2_table entry {key!r}: {value!r}")
        if r < 1 or not math.isfinite(c2) or c2 <= 0:
            raise ImproperlyConfigured(f"Invalid c2_table entry {key!r}: {value!r}. C2(r) must be positive and finite")
        table[r] = c2
    return table


app_settings = AppSettings()
