from hypothesis import HealthCheck, settings

# numba JIT warm-up on first kernel call can blow the default deadline
settings.register_profile(
    "tdsched",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("tdsched")
