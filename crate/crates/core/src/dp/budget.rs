use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DpError;

/// A zCDP parameter `ρ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget(0.0);

    pub fn new(rho: f64) -> Result<Self, DpError> {
        if rho.is_finite() && rho >= 0.0 {
            Ok(Self(rho))
        } else {
            Err(DpError::InvalidBudget(rho))
        }
    }

    #[inline]
    pub fn rho(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

/// Largest share `c ≤ total / n` such that adding `c` to itself `n` times,
/// left to right in binary64, stays `≤ total`.
pub fn even_share(total: f64, n: usize) -> f64 {
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut c = total / n as f64;
    loop {
        let sum = (0..n).fold(0.0, |acc, _| acc + c);
        if sum <= total {
            return c;
        }
        c = c.next_down();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccountId(pub usize);

impl AccountId {
    pub const MAIN: AccountId = AccountId(0);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub account: AccountId,
    pub label: String,
    pub rho: f64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Account {
    name: String,
    cap: f64,
    spent: f64,
}

/// zCDP ledger split into capped accounts.
///
/// Charges are checked with an exact `spent + ρ ≤ cap` comparison and either
/// apply in full or not at all. Since the caps are checked to sum to at most
/// the total and rounding is monotone, the total spent never exceeds the
/// total budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    total: PrivacyBudget,
    accounts: Vec<Account>,
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    /// A ledger with a single account, [`AccountId::MAIN`], capped at `total`.
    pub fn new(total: PrivacyBudget) -> Self {
        Self {
            total,
            accounts: alloc::vec![Account {
                name: "main".to_string(),
                cap: total.rho(),
                spent: 0.0,
            }],
            entries: Vec::new(),
        }
    }

    pub fn with_accounts(total: PrivacyBudget, caps: &[(&str, f64)]) -> Result<Self, DpError> {
        let mut sum = 0.0;
        for &(_, cap) in caps {
            PrivacyBudget::new(cap)?;
            sum += cap;
        }
        if sum > total.rho() {
            return Err(DpError::CapsExceedTotal {
                caps: sum,
                total: total.rho(),
            });
        }
        let accounts = caps
            .iter()
            .map(|&(name, cap)| Account {
                name: name.to_string(),
                cap,
                spent: 0.0,
            })
            .collect();
        Ok(Self {
            total,
            accounts,
            entries: Vec::new(),
        })
    }

    pub fn total(&self) -> PrivacyBudget {
        self.total
    }

    pub fn account(&self, name: &str) -> Option<AccountId> {
        self.accounts.iter().position(|a| a.name == name).map(AccountId)
    }

    pub fn charge(
        &mut self,
        account: AccountId,
        label: &str,
        rho: f64,
        sensitivity: f64,
    ) -> Result<(), DpError> {
        PrivacyBudget::new(rho)?;
        let acct = &mut self.accounts[account.0];
        let next = acct.spent + rho;
        if next > acct.cap {
            return Err(DpError::BudgetExhausted {
                account: acct.name.clone(),
                requested: rho,
                remaining: acct.cap - acct.spent,
            });
        }
        acct.spent = next;
        self.entries.push(LedgerEntry {
            account,
            label: label.to_string(),
            rho,
            sensitivity,
        });
        Ok(())
    }

    pub fn spent(&self) -> f64 {
        self.accounts.iter().fold(0.0, |acc, a| acc + a.spent)
    }

    pub fn spent_in(&self, account: AccountId) -> f64 {
        self.accounts[account.0].spent
    }

    pub fn cap_of(&self, account: AccountId) -> f64 {
        self.accounts[account.0].cap
    }

    pub fn remaining_in(&self, account: AccountId) -> f64 {
        let a = &self.accounts[account.0];
        a.cap - a.spent
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn budget_rejects_negative_and_nan() {
        assert!(PrivacyBudget::new(-0.1).is_err());
        assert!(PrivacyBudget::new(f64::NAN).is_err());
        assert_eq!(PrivacyBudget::new(0.0).unwrap(), PrivacyBudget::ZERO);
    }

    #[test]
    fn additive_composition() {
        let mut l = Ledger::new(PrivacyBudget::new(1.0).unwrap());
        l.charge(AccountId::MAIN, "a", 0.25, 1.0).unwrap();
        l.charge(AccountId::MAIN, "b", 0.5, 1.0).unwrap();
        assert_eq!(l.spent(), 0.75);
        assert_eq!(l.entries().len(), 2);
    }

    #[test]
    fn failed_charge_is_atomic() {
        let mut l = Ledger::new(PrivacyBudget::new(1.0).unwrap());
        l.charge(AccountId::MAIN, "a", 0.75, 1.0).unwrap();
        let err = l.charge(AccountId::MAIN, "b", 0.5, 1.0).unwrap_err();
        assert!(matches!(err, DpError::BudgetExhausted { .. }));
        assert_eq!(l.spent(), 0.75);
        assert_eq!(l.entries().len(), 1);
    }

    #[test]
    fn accounts_cap_independently() {
        let mut l =
            Ledger::with_accounts(PrivacyBudget::new(1.0).unwrap(), &[("a", 0.5), ("b", 0.5)])
                .unwrap();
        let a = l.account("a").unwrap();
        let b = l.account("b").unwrap();
        l.charge(a, "x", 0.5, 2.0).unwrap();
        assert!(l.charge(a, "y", 1e-9, 2.0).is_err());
        l.charge(b, "z", 0.5, 2.0).unwrap();
        assert_eq!(l.spent(), 1.0);
        assert!(
            Ledger::with_accounts(PrivacyBudget::new(1.0).unwrap(), &[("a", 0.6), ("b", 0.5)])
                .is_err()
        );
    }

    #[test]
    fn even_share_never_overshoots() {
        for n in 1..400 {
            for total in [1.0, 0.1, 0.7, 1.0 / 3.0, 12.345] {
                let c = even_share(total, n);
                let sum = (0..n).fold(0.0, |acc, _| acc + c);
                assert!(sum <= total, "n={n} total={total}");
                assert!(c > 0.0 && (c * n as f64 - total).abs() <= 1e-12 * total);
            }
        }
    }

    proptest! {
        #[test]
        fn conservation_under_interleaving(charges in proptest::collection::vec((0usize..2, 0.0f64..0.2), 0..60)) {
            let mut l = Ledger::with_accounts(PrivacyBudget::new(2.0).unwrap(), &[("a", 1.0), ("b", 1.0)]).unwrap();
            let mut expect = [0.0f64; 2];
            for (acct, rho) in charges {
                let before = l.spent_in(AccountId(acct));
                match l.charge(AccountId(acct), "c", rho, 1.0) {
                    Ok(()) => expect[acct] += rho,
                    Err(_) => prop_assert_eq!(l.spent_in(AccountId(acct)), before),
                }
                prop_assert!(l.spent() <= 2.0);
            }
            for acct in 0..2 {
                let from_entries = l.entries().iter().filter(|e| e.account.0 == acct).fold(0.0, |s, e| s + e.rho);
                prop_assert_eq!(l.spent_in(AccountId(acct)), from_entries);
                prop_assert_eq!(l.spent_in(AccountId(acct)), expect[acct]);
            }
        }
    }
}
