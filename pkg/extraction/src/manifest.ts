/** Engine-conformant manifest records (JSON Lines). */

import * as fs from 'fs'

import { Box } from './image'

/** Sigma map keys match the engine's canonical float formatting ("2.0"). */
export function sigmaKey(sigma: number): string {
  if (!Number.isFinite(sigma)) throw new Error(`bad sigma ${sigma}`)
  return Number.isInteger(sigma) ? sigma.toFixed(1) : String(sigma)
}

export interface PrecomputedPreds {
  orig: number[]
  second_blur: Record<string, number[]>
  second_noblur: number[]
}

export interface ManifestRecord {
  id: string
  split: 'train' | 'test'
  label_fine: number
  label_super: number
  image_path?: string
  feature_path?: string
  rois: Box[]
  preds?: PrecomputedPreds
  adversarial: boolean
  attack?: string
}

export function recordToJson(rec: ManifestRecord): string {
  const out: Record<string, unknown> = {
    id: rec.id,
    split: rec.split,
    label_fine: rec.label_fine,
    label_super: rec.label_super,
  }
  if (rec.image_path !== undefined) out.image_path = rec.image_path
  if (rec.feature_path !== undefined) out.feature_path = rec.feature_path
  out.rois = rec.rois.map((b) => [b.x1, b.y1, b.x2, b.y2])
  if (rec.preds !== undefined) {
    const blur: Record<string, number[]> = {}
    for (const key of Object.keys(rec.preds.second_blur).sort()) {
      blur[key] = rec.preds.second_blur[key]
    }
    out.preds = { orig: rec.preds.orig, second_blur: blur, second_noblur: rec.preds.second_noblur }
  }
  out.adversarial = rec.adversarial
  if (rec.attack !== undefined) out.attack = rec.attack
  return JSON.stringify(out)
}

export function writeManifest(records: ManifestRecord[], path: string): void {
  fs.writeFileSync(path, records.map(recordToJson).join('\n') + '\n')
}
