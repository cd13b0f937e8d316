"""Configuration files shipped with aitsim (see :func:`aitsim.config.shipped_config`)."""
