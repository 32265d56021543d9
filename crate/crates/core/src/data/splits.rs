//! Leave-one-group-out split planning.

use super::types::SplitPlan;
use super::DataError;

/// One plan per group: that group's users become the evaluation target and
/// every other group's users form the training source. Groups are taken in
/// the order given; plan names read source-groups -> target-group, e.g.
/// "ABC->D" (multi-character group names are joined with '+').
pub fn build_logo_splits(groups: &[(String, Vec<u32>)]) -> Result<Vec<SplitPlan>, DataError> {
    if groups.len() < 2 {
        return Err(DataError::BadGroups(format!(
            "need at least 2 groups for leave-one-group-out, got {}",
            groups.len()
        )));
    }
    let mut seen_names = std::collections::BTreeSet::new();
    let mut seen_users = std::collections::BTreeMap::new();
    for (name, users) in groups {
        if name.is_empty() {
            return Err(DataError::BadGroups("empty group name".into()));
        }
        if !seen_names.insert(name.clone()) {
            return Err(DataError::BadGroups(format!("duplicate group name {name}")));
        }
        if users.is_empty() {
            return Err(DataError::BadGroups(format!("group {name} has no users")));
        }
        for &u in users {
            if let Some(prev) = seen_users.insert(u, name.clone()) {
                return Err(DataError::BadGroups(format!(
                    "user {u} appears in both {prev} and {name}"
                )));
            }
        }
    }

    let single_char = groups.iter().all(|(n, _)| n.chars().count() == 1);
    let mut plans = Vec::with_capacity(groups.len());
    for (held_idx, (held_name, held_users)) in groups.iter().enumerate() {
        let source_names: Vec<&str> = groups
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_idx)
            .map(|(_, (n, _))| n.as_str())
            .collect();
        let source_users: Vec<u32> = groups
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_idx)
            .flat_map(|(_, (_, users))| users.iter().copied())
            .collect();
        let joiner = if single_char { "" } else { "+" };
        plans.push(SplitPlan {
            name: format!("{}->{}", source_names.join(joiner), held_name),
            held_out: held_name.clone(),
            source_users,
            target_users: held_users.clone(),
        });
    }
    Ok(plans)
}
