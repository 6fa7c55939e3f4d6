from django_adaptive_kernels.experiments import (  # NOQA
    oracle_check,
    rates_table,
    risk_curve,
    testbed,
    upper_function_check,
)
