//! Day-ahead regression models of curve scores and prices.

pub mod calendar;
mod features;
mod fit;
mod panel;

pub use calendar::{CalendarDummies, DayType, HolidayCalendar};
pub use features::{
    build_features, Feature, FeatureSchema, ModelVariant, EXOGENOUS_LAGS, MAX_LAG, TARGET_LAGS,
};
pub use fit::{fit_day_ahead, naive_source_day, Equation, FittedDayModel, TargetKind};
pub use panel::{Panel, PanelView, HOURS};
