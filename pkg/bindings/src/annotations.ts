/** Line-delimited annotation JSON, the CLI's polygon exchange format. */

import { readFileSync, writeFileSync } from 'node:fs'

export interface Annotation {
  polygon: number[][]
  text?: string | null
  ignore?: boolean
  score?: number
}

export function writeAnnotations(path: string, annotations: Annotation[]): void {
  const lines = annotations.map((ann) =>
    JSON.stringify({
      polygon: ann.polygon,
      text: ann.text ?? null,
      ignore: ann.ignore ?? false,
      ...(ann.score !== undefined ? { score: ann.score } : {}),
    }),
  )
  writeFileSync(path, lines.join('\n') + (lines.length ? '\n' : ''))
}

export function readAnnotations(path: string): Annotation[] {
  return readFileSync(path, 'utf8')
    .split('\n')
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as Annotation)
}
