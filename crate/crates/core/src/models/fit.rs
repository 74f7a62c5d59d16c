//! Day-ahead estimation: 24 hourly LASSO regressions per recalibration.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use super::features::{FeatureSchema, ModelVariant, MAX_LAG};
use super::panel::{PanelView, HOURS};
use crate::error::{Error, Result};
use crate::regression::{AsinhScaler, LassoFit, StandardizedDesign};

/// What the regressions predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// Curve scores, modelled on their own scale.
    Scores,
    /// Hourly prices, modelled after a median/MAD asinh transform.
    Price,
}

#[derive(Debug, Clone)]
pub struct Equation {
    pub schema: FeatureSchema,
    pub fit: LassoFit,
}

/// One recalibration of a model variant: for every hour one equation per
/// response component.
#[derive(Debug, Clone)]
pub struct FittedDayModel {
    pub variant: ModelVariant,
    pub kind: TargetKind,
    pub target_dim: usize,
    pub exogenous: Vec<usize>,
    pub scaler: Option<AsinhScaler>,
    /// `hours[h][c]`; empty for the naive rule.
    pub hours: Vec<Vec<Equation>>,
}

/// Day whose values the naive rule repeats for forecast day `day`: one week
/// back for Mondays, Saturdays and holidays, otherwise the previous day.
pub fn naive_source_day(view: &PanelView<'_>, day: usize) -> usize {
    let z = view.dummies(day);
    if z.iter().any(|v| *v != 0.0) {
        if day >= 7 {
            return day - 7;
        }
        log::debug!("naive rule: day index {day} has no week of history, using d-1");
    }
    day.saturating_sub(1)
}

fn fit_hour(
    variant: ModelVariant,
    view: &PanelView<'_>,
    train: &Range<usize>,
    exogenous: &[usize],
    hour: usize,
) -> Result<Vec<Equation>> {
    let k = view.panel().target_dim();
    let ctx = |c: usize| {
        move |e: Error| Error::Fit {
            hour,
            component: c,
            source: Box::new(e),
        }
    };
    let response =
        |c: usize| -> Vec<f64> { train.clone().map(|d| view.target(d, hour)[c]).collect() };
    if variant.shared_design() {
        let schema = FeatureSchema::new(variant, hour, 0, k, exogenous).map_err(ctx(0))?;
        let design = schema.design(view, train.clone()).map_err(ctx(0))?;
        let sd = StandardizedDesign::new(&design.x).map_err(ctx(0))?;
        (0..k)
            .map(|c| {
                let fit = sd.fit_aic(&response(c)).map_err(ctx(c))?;
                Ok(Equation {
                    schema: schema.clone(),
                    fit,
                })
            })
            .collect()
    } else {
        (0..k)
            .map(|c| {
                let schema = FeatureSchema::new(variant, hour, c, k, exogenous).map_err(ctx(c))?;
                let design = schema.design(view, train.clone()).map_err(ctx(c))?;
                let fit = StandardizedDesign::new(&design.x)
                    .and_then(|sd| sd.fit_aic(&response(c)))
                    .map_err(ctx(c))?;
                Ok(Equation { schema, fit })
            })
            .collect()
    }
}

fn check_window(view: &PanelView<'_>, train: &Range<usize>) -> Result<()> {
    if train.start < MAX_LAG || train.end > view.cutoff() || train.len() < 2 {
        return Err(Error::Horizon(format!(
            "training days {}..{} must lie in {}..{} and hold at least 2 days",
            train.start,
            train.end,
            MAX_LAG,
            view.cutoff()
        )));
    }
    Ok(())
}

fn scaled_panel(view: &PanelView<'_>, train: &Range<usize>) -> Result<(AsinhScaler, super::Panel)> {
    let prices: Vec<f64> = train
        .clone()
        .flat_map(|d| (0..HOURS).map(move |h| (d, h)))
        .map(|(d, h)| view.target(d, h)[0])
        .collect();
    let scaler = AsinhScaler::fit(&prices)?;
    Ok((scaler, view.panel().map_targets(|v| scaler.transform(v))))
}

/// Fits `variant` on the days `train` of the view's panel. Hours are fitted
/// in parallel.
pub fn fit_day_ahead(
    variant: ModelVariant,
    kind: TargetKind,
    view: &PanelView<'_>,
    train: Range<usize>,
    exogenous: &[usize],
) -> Result<FittedDayModel> {
    let k = view.panel().target_dim();
    if kind == TargetKind::Price && k != 1 {
        return Err(Error::Parameter(format!(
            "price models need a scalar target, got dimension {k}"
        )));
    }
    let mut model = FittedDayModel {
        variant,
        kind,
        target_dim: k,
        exogenous: exogenous.to_vec(),
        scaler: None,
        hours: Vec::new(),
    };
    if variant == ModelVariant::Naive {
        return Ok(model);
    }
    check_window(view, &train)?;
    let fit_all = |v: &PanelView<'_>| -> Result<Vec<Vec<Equation>>> {
        (0..HOURS)
            .into_par_iter()
            .map(|h| fit_hour(variant, v, &train, exogenous, h))
            .collect()
    };
    model.hours = match kind {
        TargetKind::Scores => fit_all(view)?,
        TargetKind::Price => {
            let (scaler, panel) = scaled_panel(view, &train)?;
            model.scaler = Some(scaler);
            let inner = panel.view(view.cutoff());
            let hours = fit_all(&inner)?;
            view.record(inner.violations());
            hours
        }
    };
    Ok(model)
}

impl FittedDayModel {
    /// Forecasts `hours[h][c]` for panel day `day`.
    pub fn predict_day(&self, view: &PanelView<'_>, day: usize) -> Result<Vec<Vec<f64>>> {
        if self.variant == ModelVariant::Naive {
            let src = naive_source_day(view, day);
            return Ok((0..HOURS).map(|h| view.target(src, h).to_vec()).collect());
        }
        let predict = |v: &PanelView<'_>| -> Result<Vec<Vec<f64>>> {
            self.hours
                .iter()
                .map(|eqs| {
                    eqs.iter()
                        .map(|e| e.fit.predict(&e.schema.row(v, day)?))
                        .collect()
                })
                .collect()
        };
        match self.scaler {
            None => predict(view),
            Some(s) => {
                let panel = view.panel().map_targets(|v| s.transform(v));
                let inner = panel.view(view.cutoff());
                let mut out = predict(&inner)?;
                view.record(inner.violations());
                out.iter_mut().flatten().for_each(|v| *v = s.inverse(*v));
                Ok(out)
            }
        }
    }

    /// Coefficient table: `hour,component,feature,coefficient,lambda`, with
    /// the intercept listed as feature `intercept`.
    pub fn write_coefficients(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["hour", "component", "feature", "coefficient", "lambda"])?;
        for (h, eqs) in self.hours.iter().enumerate() {
            for (c, e) in eqs.iter().enumerate() {
                let lambda = e.fit.lambda.to_string();
                let (hs, cs) = (h.to_string(), c.to_string());
                w.write_record([&hs, &cs, "intercept", &e.fit.intercept.to_string(), &lambda])?;
                for (name, b) in e.schema.names().iter().zip(&e.fit.coefficients) {
                    w.write_record([&hs, &cs, name, &b.to_string(), &lambda])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::models::calendar::HolidayCalendar;
    use crate::models::features::Feature;
    use crate::models::panel::Panel;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// AR(1) per hour and component with coefficient `phi`, plus one
    /// exogenous variable entering with weight 0.5 at lag 0.
    fn ar_panel(days: usize, k: usize, phi: f64, seed: u64) -> Panel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let start = NaiveDate::from_ymd_opt(2023, 1, 2).unwrap();
        let d: Vec<NaiveDate> = (0..days)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        let x: Vec<f64> = (0..days * HOURS).map(|_| n.sample(&mut rng)).collect();
        let mut y = vec![0.0; days * HOURS * k];
        for t in 0..days {
            for h in 0..HOURS {
                for c in 0..k {
                    let prev = if t > 0 {
                        y[((t - 1) * HOURS + h) * k + c]
                    } else {
                        0.0
                    };
                    y[(t * HOURS + h) * k + c] =
                        phi * prev + 0.5 * x[t * HOURS + h] + n.sample(&mut rng);
                }
            }
        }
        Panel::new(d, k, 1, y, x, &HolidayCalendar::default()).unwrap()
    }

    fn lag1(e: &Equation, hour: usize, comp: usize) -> f64 {
        let i = e
            .schema
            .features
            .iter()
            .position(|f| {
                *f == Feature::Target {
                    lag: 1,
                    hour,
                    component: comp,
                }
            })
            .unwrap();
        e.fit.coefficients[i]
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let p = ar_panel(400, 2, 0.7, 3);
        let view = p.view(390);
        let m = fit_day_ahead(ModelVariant::Arx, TargetKind::Scores, &view, 26..390, &[0]).unwrap();
        assert_eq!(m.hours.len(), 24);
        let mut worst = 0.0f64;
        for (h, eqs) in m.hours.iter().enumerate() {
            for (c, e) in eqs.iter().enumerate() {
                worst = worst.max((lag1(e, h, c) - 0.7).abs());
            }
        }
        assert!(worst < 0.15, "worst lag-1 error {worst}");
        assert_eq!(view.violations(), 0);
        let pred = m.predict_day(&view, 390).unwrap();
        assert_eq!(pred.len(), 24);
        assert!(pred
            .iter()
            .all(|r| r.len() == 2 && r.iter().all(|v| v.is_finite())));
        assert_eq!(view.violations(), 0);
    }

    #[test]
    fn varx_shares_schema_and_is_deterministic() {
        let p = ar_panel(120, 3, 0.5, 4);
        let view = p.view(110);
        let a = fit_day_ahead(ModelVariant::Varx, TargetKind::Scores, &view, 7..110, &[0]).unwrap();
        let b = fit_day_ahead(ModelVariant::Varx, TargetKind::Scores, &view, 7..110, &[0]).unwrap();
        for (ha, hb) in a.hours.iter().zip(&b.hours) {
            assert!(ha.iter().all(|e| e.schema == ha[0].schema));
            for (ea, eb) in ha.iter().zip(hb) {
                assert_eq!(ea.fit.coefficients, eb.fit.coefficients);
                assert_eq!(ea.fit.intercept.to_bits(), eb.fit.intercept.to_bits());
            }
        }
    }

    #[test]
    fn naive_rule() {
        // 2024-03-04 is a Monday
        let start = NaiveDate::from_ymd_opt(2024, 3, 4).unwrap();
        let d: Vec<NaiveDate> = (0..20)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        let y: Vec<f64> = (0..20 * HOURS).map(|i| (i / HOURS) as f64).collect();
        let p = Panel::new(d, 1, 0, y, vec![], &HolidayCalendar::default()).unwrap();
        let view = p.view(19);
        let m = fit_day_ahead(ModelVariant::Naive, TargetKind::Price, &view, 0..0, &[]).unwrap();
        // Tuesday 2024-03-12 (index 8) repeats Monday
        assert_eq!(m.predict_day(&view, 8).unwrap()[5], vec![7.0]);
        // Saturday 2024-03-16 (index 12) repeats the previous Saturday
        assert_eq!(m.predict_day(&view, 12).unwrap()[0], vec![5.0]);
        // Sunday 2024-03-17 (index 13) repeats the previous Sunday
        assert_eq!(m.predict_day(&view, 13).unwrap()[23], vec![6.0]);
        // Monday without a week of history falls back to d-1
        assert_eq!(naive_source_day(&view, 0), 0);
    }

    #[test]
    fn constant_target_predicts_intercept() {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let days = 60;
        let d: Vec<NaiveDate> = (0..days)
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        let x: Vec<f64> = (0..days * HOURS).map(|i| (i % 7) as f64).collect();
        let p = Panel::new(
            d,
            1,
            1,
            vec![4.25; days * HOURS],
            x,
            &HolidayCalendar::default(),
        )
        .unwrap();
        let view = p.view(59);
        let m = fit_day_ahead(ModelVariant::Farx, TargetKind::Scores, &view, 7..59, &[0]).unwrap();
        for row in m.predict_day(&view, 59).unwrap() {
            assert!((row[0] - 4.25).abs() < 1e-12);
        }
    }

    #[test]
    fn price_pipeline_is_transform_predict_inverse() {
        let base = ar_panel(80, 1, 0.6, 9).map_targets(|v| 100.0 + 20.0 * v);
        let view = base.view(75);
        let m = fit_day_ahead(ModelVariant::Arx, TargetKind::Price, &view, 7..75, &[0]).unwrap();
        let s = m.scaler.unwrap();
        let manual_panel = base.map_targets(|v| s.transform(v));
        let mv = manual_panel.view(75);
        let got = m.predict_day(&view, 75).unwrap();
        for h in 0..HOURS {
            let e = &m.hours[h][0];
            let t = e.fit.predict(&e.schema.row(&mv, 75).unwrap()).unwrap();
            assert!((s.inverse(t) - got[h][0]).abs() < 1e-9);
        }
        assert_eq!(view.violations(), 0);
    }

    #[test]
    fn coefficient_dump() {
        let p = ar_panel(40, 1, 0.5, 2);
        let view = p.view(39);
        let m = fit_day_ahead(ModelVariant::Arx, TargetKind::Scores, &view, 7..39, &[0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coef.csv");
        m.write_coefficients(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // header + 24 hours x (intercept + 10 regressors)
        assert_eq!(text.lines().count(), 1 + 24 * 11);
    }
}
