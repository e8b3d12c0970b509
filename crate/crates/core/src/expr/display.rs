use std::fmt::{self, Write};

use num_traits::{One, Signed};

use super::{Atom, Expr, Opaque, Rational};

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        // Highest-order terms first reads more naturally than the map order.
        for (i, (m, c)) in self.terms().rev().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    f.write_char('-')?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let a = c.abs();
            if m.is_one() {
                write_rational(f, &a)?;
                continue;
            }
            if !a.is_one() {
                write_rational(f, &a)?;
                f.write_char('*')?;
            }
            for (j, (atom, p)) in m.factors().iter().enumerate() {
                if j > 0 {
                    f.write_char('*')?;
                }
                write_atom(f, atom, *p)?;
            }
        }
        Ok(())
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, c: &Rational) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, atom: &Atom, p: i32) -> fmt::Result {
    match atom {
        Atom::Sym(s) => f.write_str(s.name())?,
        Atom::Func(func, a) => write!(f, "{}({})", func.name(), a)?,
        Atom::Opaque(o) => write_opaque(f, o)?,
        Atom::Inv(a) => return write!(f, "({})^{}", a, -p),
    }
    if p != 1 {
        write!(f, "^{p}")?;
    }
    Ok(())
}

fn write_opaque(f: &mut fmt::Formatter<'_>, o: &Opaque) -> fmt::Result {
    let call = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
        write!(f, "{}(", o.name)?;
        for (i, a) in o.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_char(')')
    };
    if !o.is_derivative() {
        return call(f);
    }
    f.write_str("deriv(")?;
    call(f)?;
    for (slot, &k) in o.partials.iter().enumerate() {
        // Name the variable when it identifies the slot unambiguously.
        let by_name = o.args[slot].as_symbol().filter(|s| {
            o.args.iter().enumerate().all(|(j, a)| j == slot || !a.depends_on(s))
        });
        for _ in 0..k {
            match by_name {
                Some(s) => write!(f, ", {s}")?,
                None => write!(f, ", {slot}")?,
            }
        }
    }
    f.write_char(')')
}
