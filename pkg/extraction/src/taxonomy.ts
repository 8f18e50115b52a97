/** Tab-separated taxonomy files shared with the engine. */

import * as fs from 'fs'

export interface Taxonomy {
  fineNames: string[]
  superNames: string[]
  fineToSuper: number[]
}

export function parseTaxonomy(text: string): Taxonomy {
  const fines = new Map<number, { name: string; superId: number }>()
  const supers = new Map<number, string>()
  for (const [lineno, raw] of text.split('\n').entries()) {
    const line = raw.trimEnd()
    if (!line.trim() || line.trimStart().startsWith('#')) continue
    const parts = line.split('\t')
    if (parts.length !== 4) throw new Error(`line ${lineno + 1}: expected 4 tab-separated fields`)
    const fineId = Number(parts[0])
    const superId = Number(parts[2])
    if (!Number.isInteger(fineId) || !Number.isInteger(superId)) {
      throw new Error(`line ${lineno + 1}: non-integer id`)
    }
    if (fines.has(fineId)) throw new Error(`line ${lineno + 1}: duplicate fine id ${fineId}`)
    const existing = supers.get(superId)
    if (existing !== undefined && existing !== parts[3]) {
      throw new Error(`line ${lineno + 1}: superclass ${superId} renamed`)
    }
    supers.set(superId, parts[3])
    fines.set(fineId, { name: parts[1], superId })
  }
  const cn = fines.size
  const sn = supers.size
  if (cn < 2) throw new Error('taxonomy needs at least 2 fine classes')
  const fineNames: string[] = []
  const fineToSuper: number[] = []
  for (let i = 0; i < cn; i++) {
    const rec = fines.get(i)
    if (!rec) throw new Error('fine class ids are not dense')
    fineNames.push(rec.name)
    fineToSuper.push(rec.superId)
  }
  const superNames: string[] = []
  for (let i = 0; i < sn; i++) {
    const name = supers.get(i)
    if (name === undefined) throw new Error('superclass ids are not dense')
    superNames.push(name)
  }
  return { fineNames, superNames, fineToSuper }
}

export function loadTaxonomy(path: string): Taxonomy {
  return parseTaxonomy(fs.readFileSync(path, 'utf-8'))
}

export function superNameOf(tax: Taxonomy, fineId: number): string {
  if (fineId < 0 || fineId >= tax.fineNames.length) {
    throw new Error(`fine class ${fineId} outside taxonomy`)
  }
  return tax.superNames[tax.fineToSuper[fineId]]
}
