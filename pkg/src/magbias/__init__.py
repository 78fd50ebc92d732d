"""Online magnetometer hard/soft-iron and rate-gyro bias estimation."""

__version__ = "0.1.0"
