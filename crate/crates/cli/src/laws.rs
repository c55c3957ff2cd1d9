use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use urnlimits::dist::{
    limit_increment_law, polya_transition_pmf, qpolya_transition_pmf, ExtinctionLaw, MulticolorDrawLaw,
    MulticolorLimitLaw, QPolyaDrawLaw, DEFAULT_TAIL_TOL,
};
use urnlimits::{Count, LimitRegime, NegBinomial, Pmf, Poisson, QParam, UrnLawParams};

use crate::table::{num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Law {
    /// Negative binomial NB(nu, p): --nu --p
    Nb,
    /// Poisson: --lambda
    Poisson,
    /// White draws among n draws of the two-colour urn: --r --s --k --q --n
    QpolyaDraw,
    /// Classical transition kernel: --n --sigma --tau
    PolyaTransition,
    /// Deformed transition kernel: --n --sigma --tau --ratio
    QpolyaTransition,
    /// Eventual number of white draws for q > 1: --r --s --k --q
    Extinction,
    /// Draw counts of colours 2..l among n draws: --a --k --q --n
    Multicolor,
    /// Eventual draw counts of colours 2..l for q < 1: --a --k --q
    MulticolorLimit,
    /// Increment of a birth limit process: --regime --t1 --t2 --j plus regime parameters
    Increment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    PolyaBirth,
    PolyaPoisson,
    QBirth,
    QPoisson,
}

#[derive(Debug, Clone, Args)]
pub struct LawArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// White balls; `inf` for infinitely many
    #[arg(long)]
    pub r: Option<Count>,
    #[arg(long)]
    pub s: Option<u64>,
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Initial counts of every colour, comma separated
    #[arg(long, value_delimiter = ',')]
    pub a: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub w0: Option<u64>,
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub j: Option<u64>,
    /// Largest x listed (per coordinate for vector laws); default: until the tail drops below --tol
    #[arg(long)]
    pub max_x: Option<u64>,
    /// Tail mass left out when --max-x is not given
    #[arg(long, default_value_t = DEFAULT_TAIL_TOL)]
    pub tol: f64,
}

fn need<T: Copy>(value: Option<T>, flag: &str, law: Law) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("law {} needs --{flag}", law_name(law)),
    }
}

pub fn law_name(law: Law) -> String {
    law.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}

enum Listing {
    Scalar(Pmf),
    Vector(Pmf<Vec<u64>>),
}

fn scalar_prefix(pmf_at: impl Fn(u64) -> f64, max_x: u64) -> Result<Pmf> {
    let support: Vec<u64> = (0..=max_x).collect();
    let probs = support.iter().map(|&x| pmf_at(x)).collect();
    Ok(Pmf::new(support, probs, 0.0)?)
}

fn finite_row(n: u64, max_x: Option<u64>, pmf_at: impl Fn(u64) -> urnlimits::Result<f64>) -> Result<Pmf> {
    let top = max_x.map_or(n, |m| m.min(n));
    let support: Vec<u64> = (0..=top).collect();
    let probs = support.iter().map(|&x| pmf_at(x)).collect::<urnlimits::Result<Vec<_>>>()?;
    Ok(Pmf::new(support, probs, 0.0)?)
}

fn listing(law: Law, args: &LawArgs) -> Result<Listing> {
    let tol = args.tol;
    let q = || -> Result<QParam> { Ok(QParam::new(need(args.q, "q", law)?)?) };
    let urn = || -> Result<UrnLawParams> {
        Ok(UrnLawParams::new(need(args.r, "r", law)?, need(args.s, "s", law)?, need(args.k, "k", law)?, q()?)?)
    };
    Ok(match law {
        Law::Nb => {
            let d = NegBinomial::new(need(args.nu, "nu", law)?, need(args.p, "p", law)?)?;
            match args.max_x {
                Some(m) => Listing::Scalar(scalar_prefix(|x| d.pmf(x), m)?),
                None => Listing::Scalar(d.tabulate(tol)?),
            }
        }
        Law::Poisson => {
            let d = Poisson::new(need(args.lambda, "lambda", law)?)?;
            match args.max_x {
                Some(m) => Listing::Scalar(scalar_prefix(|x| d.pmf(x), m)?),
                None => Listing::Scalar(d.tabulate(tol)?),
            }
        }
        Law::QpolyaDraw => {
            let d = QPolyaDrawLaw::new(urn()?, need(args.n, "n", law)?)?;
            Listing::Scalar(finite_row(d.n(), args.max_x, |x| d.pmf(x))?)
        }
        Law::PolyaTransition => {
            let (n, sigma, tau) = (need(args.n, "n", law)?, need(args.sigma, "sigma", law)?, need(args.tau, "tau", law)?);
            Listing::Scalar(finite_row(n, args.max_x, |x| polya_transition_pmf(n, x, sigma, tau))?)
        }
        Law::QpolyaTransition => {
            let (n, sigma, tau) = (need(args.n, "n", law)?, need(args.sigma, "sigma", law)?, need(args.tau, "tau", law)?);
            let ratio = need(args.ratio, "ratio", law)?;
            Listing::Scalar(finite_row(n, args.max_x, |x| qpolya_transition_pmf(n, x, sigma, tau, ratio))?)
        }
        Law::Extinction => {
            let d = ExtinctionLaw::new(urn()?)?;
            match args.max_x {
                Some(m) => Listing::Scalar(scalar_prefix(|x| d.pmf(x), m)?),
                None => Listing::Scalar(d.tabulate(tol)?),
            }
        }
        Law::Multicolor => {
            let a = args.a.clone().ok_or_else(|| anyhow::anyhow!("law multicolor needs --a"))?;
            let d = MulticolorDrawLaw::new(a, need(args.k, "k", law)?, q()?, need(args.n, "n", law)?)?;
            let mut row = d.row()?;
            if let Some(m) = args.max_x {
                keep_box(&mut row, m);
            }
            Listing::Vector(row)
        }
        Law::MulticolorLimit => {
            let a = args.a.clone().ok_or_else(|| anyhow::anyhow!("law multicolor-limit needs --a"))?;
            let d = MulticolorLimitLaw::new(&a, need(args.k, "k", law)?, q()?)?;
            match args.max_x {
                Some(m) => {
                    let mut support = vec![vec![]];
                    for _ in 1..a.len() {
                        support = support
                            .into_iter()
                            .flat_map(|s: Vec<u64>| {
                                (0..=m).map(move |x| {
                                    let mut v = s.clone();
                                    v.push(x);
                                    v
                                })
                            })
                            .collect();
                    }
                    let probs = support.iter().map(|x| d.pmf(x)).collect::<urnlimits::Result<Vec<_>>>()?;
                    Listing::Vector(Pmf::new(support, probs, 0.0)?)
                }
                None => Listing::Vector(d.tabulate(tol)?),
            }
        }
        Law::Increment => {
            let regime = match need(args.regime, "regime", law)? {
                Regime::PolyaBirth => LimitRegime::PolyaBirth {
                    w0: need(args.w0, "w0", law)?,
                    k: need(args.k, "k", law)?,
                    b0: need(args.b0, "b0", law)?,
                },
                Regime::PolyaPoisson => LimitRegime::PolyaPoisson {
                    b0: need(args.b0, "b0", law)?,
                },
                Regime::QBirth => LimitRegime::QBirth {
                    w0: need(args.w0, "w0", law)?,
                    k: need(args.k, "k", law)?,
                    b0: need(args.b0, "b0", law)?,
                    c: need(args.c, "c", law)?,
                },
                Regime::QPoisson => LimitRegime::QPoisson {
                    b0: need(args.b0, "b0", law)?,
                    c: need(args.c, "c", law)?,
                },
            };
            let d = limit_increment_law(regime, need(args.t1, "t1", law)?, need(args.t2, "t2", law)?, args.j.unwrap_or(0))?;
            match args.max_x {
                Some(m) => Listing::Scalar(scalar_prefix(|x| d.pmf(x), m)?),
                None => Listing::Scalar(d.tabulate(tol)?),
            }
        }
    })
}

fn keep_box(row: &mut Pmf<Vec<u64>>, max_x: u64) {
    let (support, probs): (Vec<_>, Vec<_>) = row
        .support
        .drain(..)
        .zip(row.probs.drain(..))
        .filter(|(x, _)| x.iter().all(|&v| v <= max_x))
        .unzip();
    row.support = support;
    row.probs = probs;
}

/// Tabulates `law` with columns `x` (or `x2..xl`) and `prob`, summed in the footer.
pub fn law_table(law: Law, args: &LawArgs) -> Result<Table> {
    let (mut table, total, truncation) = match listing(law, args)? {
        Listing::Scalar(pmf) => {
            let mut t = Table::new(["x", "prob"]);
            for (&x, p) in pmf.iter() {
                t.push(vec![x.into(), num(p)]);
            }
            (t, pmf.total(), pmf.truncation_mass)
        }
        Listing::Vector(pmf) => {
            let dims = pmf.support.first().map_or(0, Vec::len);
            let mut columns: Vec<String> = (2..dims + 2).map(|i| format!("x{i}")).collect();
            columns.push("prob".into());
            let mut t = Table::new(columns);
            for (x, p) in pmf.iter() {
                let mut row: Vec<_> = x.iter().map(|&v| v.into()).collect();
                row.push(num(p));
                t.push(row);
            }
            (t, pmf.total(), pmf.truncation_mass)
        }
    };
    table.footer.push(("sum".into(), num(total)));
    if truncation > 0.0 {
        table.footer.push(("truncation_mass".into(), num(truncation)));
    }
    Ok(table)
}
