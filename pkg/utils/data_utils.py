# data_utils.py - Quote file parsing and per-date market snapshots

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from engines.black_pricing import forward_from_parity
from models.market_models import DiscountContext, MarketSnapshot, OptionType, QuoteRecord
from utils.exceptions import DomainError, MalformedRow, MissingPair
from utils.market_conventions import QUOTE_COLUMNS, MarketConventions


class QuoteDataUtils:
    """
    Parsing and cleaning of daily option quote files.
    """

    @staticmethod
    def read_quote_frame(csv_path) -> pd.DataFrame:
        """
        Reads a quote file and validates every row.

        Args:
            csv_path (str | Path): CSV with header date,strike,type,close,volume

        Returns:
            pandas.DataFrame: typed columns date, strike, type, close, volume

        Raises:
            MalformedRow: bad header (line 1) or the first invalid data row
        """
        path = Path(csv_path)
        if not path.is_file():
            raise DomainError(f"quote file not found: {path}", {"path": str(path)})
        try:
            raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", skip_blank_lines=True)
        except pd.errors.ParserError as e:
            line = QuoteDataUtils._parser_error_line(str(e))
            raise MalformedRow(f"cannot tokenize row: {e}", line_number=line)

        if list(raw.columns) != QUOTE_COLUMNS:
            raise MalformedRow(f"header must be {','.join(QUOTE_COLUMNS)}, got {','.join(raw.columns)}", line_number=1)

        records = [QuoteDataUtils.parse_row(row, i + 2) for i, row in enumerate(raw.itertuples(index=False))]
        frame = pd.DataFrame(
            {
                "date": [r.trade_date for r in records],
                "strike": [r.strike for r in records],
                "type": [r.option_type.value for r in records],
                "close": [r.close for r in records],
                "volume": [r.volume for r in records],
            },
            columns=QUOTE_COLUMNS,
        )
        logger.info(f"Read {len(frame)} quotes over {frame['date'].nunique()} dates from {path.name}")
        return frame

    @staticmethod
    def _parser_error_line(message: str) -> int:
        # pandas reports "... Expected 5 fields in line 7, saw 6"
        marker = " line "
        if marker in message:
            digits = message.split(marker, 1)[1].split(",")[0].strip()
            if digits.isdigit():
                return int(digits)
        return 0

    @staticmethod
    def parse_row(row, line_number: int) -> QuoteRecord:
        """
        Converts one raw row into a QuoteRecord.

        Args:
            row (tuple): (date, strike, type, close, volume) as strings
            line_number (int): 1-based line in the file

        Returns:
            QuoteRecord: validated quote
        """
        values = [str(v).strip() for v in row]
        if len(values) != len(QUOTE_COLUMNS) or any(v == "" for v in values):
            raise MalformedRow("missing field", line_number=line_number)
        date_text, strike_text, type_text, close_text, volume_text = values

        option_type = MarketConventions.get_option_type_codes().get(type_text.upper())
        if option_type is None:
            raise MalformedRow(f"unknown option type {type_text!r}", line_number=line_number)
        try:
            trade_date = pd.Timestamp(date_text).date()
            if len(date_text) != 10:
                raise ValueError(date_text)
            strike, close, volume = float(strike_text), float(close_text), float(volume_text)
        except ValueError as e:
            raise MalformedRow(f"cannot parse value: {e}", line_number=line_number)

        valid, issues = MarketConventions.validate_quote_fields(strike, close, volume)
        if not valid:
            raise MalformedRow("; ".join(issues), line_number=line_number)
        return QuoteRecord(trade_date=trade_date, strike=strike, option_type=OptionType(option_type),
                           close=close, volume=int(volume))

    @staticmethod
    def parity_strike(day: pd.DataFrame) -> Optional[float]:
        """
        Strike of the most traded put/call pair on one date.

        Returns:
            float: strike with maximal combined volume among strikes where both legs traded, or None
        """
        legs = day.pivot_table(index="strike", columns="type", values="volume", aggfunc="sum")
        if OptionType.CALL.value not in legs or OptionType.PUT.value not in legs:
            return None
        legs = legs.dropna()
        legs = legs[(legs[OptionType.CALL.value] > 0) & (legs[OptionType.PUT.value] > 0)]
        if legs.empty:
            return None
        combined = legs[OptionType.CALL.value] + legs[OptionType.PUT.value]
        # ties go to the lowest strike
        return float(combined.idxmax())

    @staticmethod
    def build_snapshot(day: pd.DataFrame, trade_date, maturity_date, rate: float, volume_threshold: int = 0,
                       excluded_strikes: Sequence[float] = ()) -> MarketSnapshot:
        """
        Cleans the quotes of one date into a MarketSnapshot.

        Raises:
            MissingPair: no strike with a traded put and call
        """
        strike = QuoteDataUtils.parity_strike(day)
        if strike is None:
            raise MissingPair(f"no traded put/call pair on {trade_date}", {"date": str(trade_date)})

        tau = MarketConventions.year_fraction(trade_date, maturity_date)
        ctx = DiscountContext(rate=rate, tau=tau)
        pair = day[day["strike"] == strike].groupby("type")["close"].last()
        forward = float(forward_from_parity(float(pair[OptionType.CALL.value]), float(pair[OptionType.PUT.value]), strike, ctx))

        calls = day[(day["type"] == OptionType.CALL.value) & (day["volume"] > 0) & (day["volume"] >= volume_threshold)]
        calls = calls[~calls["strike"].isin(list(excluded_strikes))]
        calls = calls.groupby("strike")["close"].last().sort_index()
        if calls.empty:
            raise MissingPair(f"no call passes the volume threshold on {trade_date}", {"date": str(trade_date)})

        return MarketSnapshot(
            tau=tau,
            rate=rate,
            forward=forward,
            strikes=[float(k) for k in calls.index],
            option_forwards=[float(c) * ctx.growth_factor for c in calls.values],
            valuation_date=trade_date,
            source="quotes",
        )


def ingest_quotes(csv_path, config) -> List[MarketSnapshot]:
    """
    Per-date market snapshots from a quote file.

    Each date's forward comes from put-call parity at the strike of the most
    traded pair; call closes are grown to option forwards with e^{r tau}.
    Dates without a usable pair are skipped with a warning.

    Args:
        csv_path (str | Path): Quote file
        config (MarketConfig): maturity date, rate, volume threshold and excluded strikes

    Returns:
        list: MarketSnapshot per usable date, in date order
    """
    frame = QuoteDataUtils.read_quote_frame(csv_path)
    snapshots: List[MarketSnapshot] = []
    for trade_date, day in frame.groupby("date", sort=True):
        if trade_date >= config.maturity_date:
            logger.warning(f"Skipping {trade_date}: on or after expiry {config.maturity_date}")
            continue
        try:
            snapshots.append(QuoteDataUtils.build_snapshot(
                day, trade_date, config.maturity_date, config.rate,
                config.volume_threshold, config.excluded_strikes,
            ))
        except MissingPair as e:
            logger.warning(f"Skipping {trade_date}: {e.message}")
    if not snapshots:
        raise MissingPair("no usable date in the quote file", {"path": str(csv_path)})
    return snapshots


def restrict_snapshot(snap: MarketSnapshot, strikes: Sequence[float]) -> MarketSnapshot:
    """
    Snapshot reduced to the given calibration strikes.

    Raises:
        MissingPair: a requested strike has no quote on the snapshot's date
    """
    lookup: Dict[float, float] = dict(zip(snap.strikes, snap.option_forwards))
    missing = [k for k in strikes if not any(np.isclose(k, s, rtol=0.0, atol=1e-9) for s in lookup)]
    if missing:
        raise MissingPair(f"{snap.valuation_date} lacks quotes at strikes {missing}",
                          {"date": str(snap.valuation_date), "strikes": missing})
    chosen = [next(g for s, g in lookup.items() if np.isclose(k, s, rtol=0.0, atol=1e-9)) for k in strikes]
    return snap.model_copy(update={"strikes": [float(k) for k in strikes], "option_forwards": chosen})


def snapshots_to_frame(snapshots: Sequence[MarketSnapshot]) -> pd.DataFrame:
    """Long table of snapshots: one row per (date, strike) plus the forward as strike 0."""
    rows = []
    for snap in snapshots:
        rows.append({"date": snap.valuation_date, "tau": snap.tau, "strike": 0.0, "forward_price": snap.forward})
        rows.extend({"date": snap.valuation_date, "tau": snap.tau, "strike": k, "forward_price": g}
                    for k, g in zip(snap.strikes, snap.option_forwards))
    return pd.DataFrame(rows, columns=["date", "tau", "strike", "forward_price"])


def price_series(snapshots: Sequence[MarketSnapshot]) -> np.ndarray:
    """Stack (G0, G1, ..., Gn) of equally struck snapshots into an (m, n+1) array."""
    if len({tuple(s.strikes) for s in snapshots}) > 1:
        raise DomainError("snapshots must share one strike set; restrict them first")
    return np.vstack([s.price_vector() for s in snapshots])
