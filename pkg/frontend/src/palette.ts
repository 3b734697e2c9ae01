// Mirrors the service's label palette (index = label id).

export const LABEL_COLORS: [number, number, number][] = [
  [134, 193, 234], // sky
  [110, 106, 118], // mountain
  [32, 84, 44], // tree
  [96, 147, 62], // grass
  [121, 92, 53], // earth
  [62, 107, 145], // water
  [87, 82, 73], // rock
];

export function cssColor(label: number): string {
  const [r, g, b] = LABEL_COLORS[label % LABEL_COLORS.length];
  return `rgb(${r}, ${g}, ${b})`;
}
