# market_conventions.py - Day count, quote file layout and option-market rules

import math
from datetime import date
from typing import List, Tuple

DAYS_PER_YEAR = 365.0
QUOTE_COLUMNS = ["date", "strike", "type", "close", "volume"]


class MarketConventions:
    """
    Market conventions shared by ingestion, calibration and the command layer.
    """

    @staticmethod
    def year_fraction(start: date, end: date) -> float:
        """
        Actual/365 year fraction between two dates.

        Args:
            start (date): Valuation date
            end (date): Maturity date

        Returns:
            float: (end - start).days / 365, zero if end precedes start
        """
        return max((end - start).days, 0) / DAYS_PER_YEAR

    @staticmethod
    def days_between(start: date, end: date) -> int:
        return (end - start).days

    @staticmethod
    def get_option_type_codes():
        """Accepted spellings of the option type column."""
        return {
            "C": "call",
            "CALL": "call",
            "P": "put",
            "PUT": "put",
        }

    @staticmethod
    def validate_quote_fields(strike: float, close: float, volume: float) -> Tuple[bool, List[str]]:
        """
        Validates the numeric fields of one quote row.

        Args:
            strike (float): Strike price
            close (float): Closing option price
            volume (float): Number of registered trades

        Returns:
            tuple: (is_valid, list of issues)
        """
        issues = []
        for name, value in (("strike", strike), ("close", close), ("volume", volume)):
            if not math.isfinite(value):
                issues.append(f"{name} must be finite, got {value}")
        if issues:
            return (False, issues)
        if not strike > 0:
            issues.append(f"strike must be positive, got {strike}")
        if not close >= 0:
            issues.append(f"close must be non-negative, got {close}")
        if not volume >= 0:
            issues.append(f"volume must be non-negative, got {volume}")
        elif float(volume) != int(volume):
            issues.append(f"volume must be a whole number, got {volume}")

        return (len(issues) == 0, issues)

    @staticmethod
    def model_time_step(model_maturity: float, days_to_expiry: int) -> float:
        """One calendar day on the model clock."""
        if days_to_expiry <= 0:
            raise ValueError("days_to_expiry must be positive")
        return model_maturity / days_to_expiry
