/**
 * Canonical entity key: lower-cased with whitespace runs collapsed.
 * Must agree with the consumer package's canonicalization (ASCII inputs;
 * locale-dependent case folds are out of scope for this pipeline).
 */
export function canonicalEntity(name: string): string {
  return name.trim().split(/\s+/).join(" ").toLowerCase();
}
