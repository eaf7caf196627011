"""Ground-truth generators for the NLSE, KSE and CGLE target states."""

from .nlse import (NlseParams, akhmediev_breather, breather, collision, kuznetsov_ma,
                   nlse_residual, select_breather_variant, soliton_collision)
from .series import (Encoding, FieldSeries, SampledField, encode, read_series_csv,
                     write_complex_field, write_series_csv)
from .spectral import CglParams, Etdrk4, KseParams, solve_cgle, solve_kse

__all__ = [
    "CglParams", "Encoding", "Etdrk4", "FieldSeries", "KseParams", "NlseParams",
    "SampledField", "akhmediev_breather", "breather", "collision", "encode",
    "kuznetsov_ma", "nlse_residual", "read_series_csv", "select_breather_variant",
    "soliton_collision", "solve_cgle", "solve_kse", "write_complex_field",
    "write_series_csv",
]
